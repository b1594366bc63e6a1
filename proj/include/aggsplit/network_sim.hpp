#ifndef AGGSPLIT_NETWORK_SIM_HPP
#define AGGSPLIT_NETWORK_SIM_HPP

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <set>
#include <utility>
#include <vector>

#include "aggsplit/linalg.hpp"
#include "aggsplit/problem.hpp"
#include "aggsplit/splitting.hpp"

namespace aggsplit::sim {

/// Message phases of one round, in execution order.
enum class Phase {
  AcuEstimatePush,  // head → tail ỹⱼᵢ, head → edge ỹⱼᵢ, edge → tail μ̃ⱼᵢ
  AcuYPush,         // tail → out-edges yⱼ
  AcuMuPush,        // edge → head μⱼᵢ
  LambdaTildePush,  // edge → both endpoints λ̃ⱼᵢ
  HatSumPush,       // agent → incident edges Aᵢx̂ᵢ + σ̂ᵢ
  LambdaHatPush,    // edge → both endpoints λ̂ⱼᵢ
  BarSumPush,       // agent → incident edges Aᵢx̄ᵢ + σ̄ᵢ
};
inline constexpr int kNumPhases = 7;
const char* to_string(Phase phase);

enum class EntityKind { Agent, EdgeArbitrator };

/// Entity ids: agents 0..N−1, edge e is N + e. `edge` names the graph edge
/// the payload belongs to; agent-to-agent messages travel along it.
struct Message {
  int round = 0;
  Phase phase = Phase::AcuEstimatePush;
  int from = 0;
  int to = 0;
  int edge = 0;
  Vec payload;
};

struct Violation {
  int round = 0;
  Phase phase = Phase::AcuEstimatePush;
  int from = 0;
  int to = 0;
  int edge = 0;
};

struct AuditReport {
  std::set<std::pair<int, int>> pairs;  // every (from, to) observed
  std::vector<Violation> violations;
  std::vector<std::size_t> messages_per_round;
  std::vector<std::size_t> bytes_per_round;
  /// Payload numbers sent by each agent, summed over the audited rounds.
  std::vector<std::size_t> agent_payload;
  int rounds = 0;
};

/// Agents and edge arbitrators exchanging messages in synchronous phases.
/// Every entity owns its part of ψ̃ and computes with the same local kernels
/// as DrEngine, so owned state matches the monolithic engine bit for bit.
class SimWorld {
 public:
  SimWorld(const ProblemInstance& instance, const StepSizes& steps, const Iterate& init, int threads = 0);
  ~SimWorld();
  SimWorld(SimWorld&&) noexcept;
  SimWorld& operator=(SimWorld&&) noexcept;

  int num_agents() const;
  int num_edges() const;
  int num_entities() const;
  EntityKind kind(int id) const;
  /// Entities id may exchange messages with, ascending.
  const std::vector<int>& neighbors(int id) const;

  /// One full iteration through messages. Throws ProtocolViolation when an
  /// entity sends to a non-incident entity (strict mode) or reads a value
  /// that was not delivered.
  void run_round(int k);

  /// Harness view of all owned variables after the last round.
  void snapshot(DrState& state) const;
  Iterate tilde() const;

  /// Numbers held in agent i's ψ̃ part: nᵢ + l(2 + in-degree).
  std::size_t agent_state_size(int i) const;

  /// Non-strict mode records violations for the audit instead of throwing.
  void set_strict(bool strict);
  /// JSON lines, one per message. Null disables logging.
  void set_message_log(std::ostream* log);
  /// Test hook: sends a message outside the round schedule.
  void inject(const Message& message);

  /// Traffic recorded so far.
  const AuditReport& traffic() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SimWorld spawn_topology(const ProblemInstance& instance, const StepSizes& steps, const Iterate& init,
                        int threads = 0);

/// Runs `rounds` more rounds and returns all traffic recorded by the world,
/// with incidence re-checked against the communication graph.
AuditReport locality_audit(SimWorld& world, const ProblemInstance& instance, int rounds);

/// Closed-form message count of one round: 13 per directed edge.
std::size_t messages_per_round(const CommGraph& graph);

/// run() with every pass routed through a SimWorld.
RunResult run_simulated(const ProblemInstance& instance, const RunOptions& options = {},
                        std::ostream* message_log = nullptr);

}  // namespace aggsplit::sim

#endif  // AGGSPLIT_NETWORK_SIM_HPP
