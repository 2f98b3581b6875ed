#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "openfl/dataset.hpp"
#include "openfl/optimizer.hpp"
#include "openfl/rng.hpp"
#include "openfl/vec.hpp"

namespace openfl {

enum class OptimizerKind { local_sgd, local_adam };
enum class ChurnTiming { per_communication_round, per_iteration };

struct ChurnConfig {
  double p_leave = 0.0;
  double p_join = 0.0;
  int max_leave_per_event = 1;
  int max_join_per_event = 1;
  ChurnTiming timing = ChurnTiming::per_communication_round;
};

struct Schedule {
  int local_steps_per_round = 5;  // H local-update iterations per round
  int total_rounds = 0;           // K communication rounds
};

struct SelectionConfig {
  enum class Mode { bernoulli_subset, weighted_iid };
  Mode mode = Mode::bernoulli_subset;
  double q = 1.0;  // Bernoulli selection probability
};

struct ClientState {
  std::int64_t id = 0;
  bool eligible = false;
  Vec model;
  AdamMoments moments;  // used when the local optimizer is Adam
  int shard_index = 0;
  int joined_at_round = 0;
  Rng rng;
};

struct Roster {
  std::vector<ClientState> active;
  std::vector<int> pool;  // shard indices of not-yet-joined clients
  std::vector<std::int64_t> departed_ids;

  int eligible_count() const {
    int n = 0;
    for (const auto& c : active) n += c.eligible ? 1 : 0;
    return n;
  }

  int departed_count() const { return static_cast<int>(departed_ids.size()); }
};

struct ChurnEvent {
  enum class Kind { join, leave, join_suppressed, leave_suppressed };
  int round = 0;
  Kind kind = Kind::join;
  std::int64_t client_id = -1;  // -1 for suppressed joins (no id assigned)
};

struct Selection {
  std::vector<std::int64_t> ids;
  std::vector<double> weights;
};

struct RoundRecord {
  int round = 0;
  double iterate_norm = 0.0;
  double global_loss = 0.0;
  int n_clients = 0;
  int n_eligible = 0;
  int n_joined = 0;
  int n_left = 0;
  std::vector<std::int64_t> selected_ids;
};

struct RunRecord {
  std::vector<RoundRecord> rounds;  // index 0 holds the initial state
  std::vector<ChurnEvent> events;
};

// Weighted mean sum(w_i x_i) / sum(w_i). Requires equal dimensions and at
// least one positive weight; the result never leaves the convex hull, so
// ||x_bar|| <= max_i ||x_i||.
Vec federated_average(const std::vector<Vec>& models, const std::vector<double>& weights);

// Draws the averaging weights over eligible clients only. Bernoulli mode
// resamples until at least one client is selected; weighted mode draws
// i.i.d. Exponential(1) weights.
Selection select_clients(const Roster& roster, const SelectionConfig& cfg, Rng& rng);

// One churn event: with probability p_leave, up to max_leave_per_event
// uniformly chosen active clients leave (suppressed when the eligible set
// would empty); with probability p_join, up to max_join_per_event clients
// join from the pool, ineligible until the next broadcast.
void apply_churn(Roster& roster, const ChurnConfig& cfg, int round, int model_dim,
                 std::int64_t& next_client_id, Rng& rng, std::vector<ChurnEvent>& events);

struct SimulationConfig {
  int d = 20;
  int m = 50;
  int n_total = 1000;
  int n_initial = 10;
  Schedule schedule;
  ChurnConfig churn;
  SelectionConfig selection;
  OptimizerKind optimizer = OptimizerKind::local_sgd;
  double eta = 1.0;  // SGD learning rate
  AdamHyper adam;
  double lambda = 0.01;
  double sigma_data = 2.0;
  int batch_size = 10;
  bool reset_moments_on_broadcast = false;
  std::uint64_t data_seed = 0;
  std::uint64_t run_seed = 0;
  std::optional<Vec> x0;  // defaults to the zero vector
};

// One deterministic open-FL run. Single-threaded by design; Monte-Carlo
// replicas parallelize across Simulation instances.
class Simulation {
 public:
  explicit Simulation(const SimulationConfig& cfg);

  RoundRecord run_round();
  RunRecord run_experiment();

  const Roster& roster() const { return roster_; }
  const Vec& global_model() const { return global_model_; }
  const std::vector<ChurnEvent>& events() const { return events_; }
  int round() const { return round_; }
  RoundRecord initial_record();

  // Client shards come from a pool of n_total datasets fixed by data_seed.
  // One pair of class means is drawn for the whole pool (the data are
  // identically distributed across clients); shard i holds its own i.i.d.
  // samples, generated on first use from a per-shard stream so that
  // materialization order cannot affect the data.
  const Dataset& shard(int index);
  const ClassMeans& class_means() const { return class_means_; }

  // Test hook: runs one churn event immediately (used to pin join timing).
  void force_churn_event(const ChurnConfig& cfg);

 private:
  void local_update_iteration();
  RoundRecord communication_iteration();
  void churn_event();
  ClientState make_client(std::int64_t id, int shard_index, int joined_at_round) const;

  SimulationConfig cfg_;
  Roster roster_;
  ClassMeans class_means_;
  std::vector<std::optional<Dataset>> shard_cache_;
  Rng churn_rng_;
  Rng select_rng_;
  Vec global_model_;
  int round_ = 0;
  std::int64_t next_client_id_ = 0;
  std::vector<ChurnEvent> events_;
};

}  // namespace openfl
