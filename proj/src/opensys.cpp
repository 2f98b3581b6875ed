#include "openfl/opensys.hpp"

#include <algorithm>
#include <stdexcept>

#include "openfl/objective.hpp"

namespace openfl {

Vec federated_average(const std::vector<Vec>& models, const std::vector<double>& weights) {
  if (models.empty() || models.size() != weights.size())
    throw std::invalid_argument("federated_average: empty input or size mismatch");
  const std::size_t d = models[0].size();
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].size() != d)
      throw std::invalid_argument("federated_average: dimension mismatch");
    if (weights[i] < 0.0)
      throw std::invalid_argument("federated_average: negative weight");
    weight_sum += weights[i];
  }
  if (weight_sum <= 0.0)
    throw std::invalid_argument("federated_average: all weights are zero; caller must resample");
  Vec avg(d, 0.0);
  for (std::size_t i = 0; i < models.size(); ++i) axpy(weights[i], models[i], avg);
  for (double& v : avg) v /= weight_sum;
  return avg;
}

Selection select_clients(const Roster& roster, const SelectionConfig& cfg, Rng& rng) {
  std::vector<const ClientState*> eligible;
  for (const auto& c : roster.active)
    if (c.eligible) eligible.push_back(&c);
  if (eligible.empty())
    throw std::runtime_error("select_clients: no eligible clients (protocol violation)");

  Selection sel;
  if (cfg.mode == SelectionConfig::Mode::bernoulli_subset) {
    if (cfg.q <= 0.0 || cfg.q > 1.0)
      throw std::invalid_argument("select_clients: Bernoulli q must lie in (0, 1]");
    // Resample the whole Bernoulli vector until at least one client is in.
    for (int attempt = 0; attempt < 1000000; ++attempt) {
      sel.ids.clear();
      sel.weights.clear();
      for (const ClientState* c : eligible) {
        if (rng.bernoulli(cfg.q)) {
          sel.ids.push_back(c->id);
          sel.weights.push_back(1.0);
        }
      }
      if (!sel.ids.empty()) return sel;
    }
    throw std::runtime_error("select_clients: selection failed to produce a nonempty subset");
  }

  // weighted_iid: i.i.d. nonnegative weights for every eligible client.
  for (const ClientState* c : eligible) {
    sel.ids.push_back(c->id);
    sel.weights.push_back(rng.exponential());
  }
  double total = 0.0;
  for (double w : sel.weights) total += w;
  if (total <= 0.0) {
    for (double& w : sel.weights) w = 1.0;
  }
  return sel;
}

void apply_churn(Roster& roster, const ChurnConfig& cfg, int round, int model_dim,
                 std::int64_t& next_client_id, Rng& rng, std::vector<ChurnEvent>& events) {
  // Algorithm order: departures first, then arrivals.
  if (rng.bernoulli(cfg.p_leave)) {
    for (int t = 0; t < cfg.max_leave_per_event && !roster.active.empty(); ++t) {
      const std::size_t idx = rng.uniform_index(roster.active.size());
      ClientState& victim = roster.active[idx];
      // Keep at least one eligible client available for every communication.
      if (victim.eligible && roster.eligible_count() == 1) {
        events.push_back({round, ChurnEvent::Kind::leave_suppressed, victim.id});
        continue;
      }
      events.push_back({round, ChurnEvent::Kind::leave, victim.id});
      roster.departed_ids.push_back(victim.id);
      roster.active.erase(roster.active.begin() + static_cast<std::ptrdiff_t>(idx));
    }
  }
  if (rng.bernoulli(cfg.p_join)) {
    for (int t = 0; t < cfg.max_join_per_event; ++t) {
      if (roster.pool.empty()) {
        events.push_back({round, ChurnEvent::Kind::join_suppressed, -1});
        break;
      }
      const int shard_index = roster.pool.front();
      roster.pool.erase(roster.pool.begin());
      ClientState c;
      c.id = next_client_id++;
      c.eligible = false;  // waits for the next broadcast
      c.model = zeros(static_cast<std::size_t>(model_dim));
      c.moments = zero_moments(static_cast<std::size_t>(model_dim));
      c.shard_index = shard_index;
      c.joined_at_round = round;
      events.push_back({round, ChurnEvent::Kind::join, c.id});
      roster.active.push_back(std::move(c));
    }
  }
}

Simulation::Simulation(const SimulationConfig& cfg)
    : cfg_(cfg),
      shard_cache_(static_cast<std::size_t>(cfg.n_total)),
      churn_rng_(derive_seed(cfg.run_seed, {stream::churn})),
      select_rng_(derive_seed(cfg.run_seed, {stream::select})) {
  if (cfg_.n_initial < 1 || cfg_.n_initial > cfg_.n_total)
    throw std::invalid_argument("Simulation: need 1 <= n_initial <= n_total");
  if (cfg_.d < 1 || cfg_.m < 1) throw std::invalid_argument("Simulation: need d, m >= 1");
  if (cfg_.schedule.local_steps_per_round < 1)
    throw std::invalid_argument("Simulation: local_steps_per_round must be >= 1");
  if (cfg_.optimizer == OptimizerKind::local_adam) validate(cfg_.adam);
  if (cfg_.batch_size < 1 || cfg_.batch_size > cfg_.m)
    throw std::invalid_argument("Simulation: batch_size must lie in [1, m]");

  global_model_ = cfg_.x0 ? *cfg_.x0 : zeros(static_cast<std::size_t>(cfg_.d));
  if (static_cast<int>(global_model_.size()) != cfg_.d)
    throw std::invalid_argument("Simulation: x0 dimension mismatch");

  Rng means_rng(derive_seed(cfg_.data_seed, {stream::data_means}));
  class_means_ = draw_class_means(cfg_.d, means_rng);

  // Global initialize: broadcast to the initial clients, mark all eligible.
  for (int i = 0; i < cfg_.n_initial; ++i) {
    ClientState c = make_client(next_client_id_++, i, 0);
    c.eligible = true;
    c.model = global_model_;
    roster_.active.push_back(std::move(c));
  }
  roster_.pool.resize(static_cast<std::size_t>(cfg_.n_total - cfg_.n_initial));
  for (std::size_t i = 0; i < roster_.pool.size(); ++i)
    roster_.pool[i] = cfg_.n_initial + static_cast<int>(i);
}

ClientState Simulation::make_client(std::int64_t id, int shard_index,
                                    int joined_at_round) const {
  ClientState c;
  c.id = id;
  c.eligible = false;
  c.model = zeros(static_cast<std::size_t>(cfg_.d));
  c.moments = zero_moments(static_cast<std::size_t>(cfg_.d));
  c.shard_index = shard_index;
  c.joined_at_round = joined_at_round;
  c.rng = Rng(derive_seed(cfg_.run_seed, {stream::client, static_cast<std::uint64_t>(id)}));
  return c;
}

const Dataset& Simulation::shard(int index) {
  auto& slot = shard_cache_.at(static_cast<std::size_t>(index));
  if (!slot) {
    Rng rng(derive_seed(cfg_.data_seed, {stream::data, static_cast<std::uint64_t>(index)}));
    slot = sample_dataset(class_means_, cfg_.m, cfg_.sigma_data, rng);
  }
  return *slot;
}

void Simulation::local_update_iteration() {
  for (auto& c : roster_.active) {
    if (!c.eligible) continue;  // newly joined clients wait for the broadcast
    const Dataset& data = shard(c.shard_index);
    const std::vector<int> batch =
        sample_batch(cfg_.m, std::min(cfg_.batch_size, cfg_.m), c.rng);
    const Vec g = logistic_batch_gradient(data, cfg_.lambda, c.model, batch);
    if (cfg_.optimizer == OptimizerKind::local_sgd) {
      sgd_update(c.model, cfg_.eta, g);
    } else {
      adam_update(c.model, c.moments, cfg_.adam, g);
    }
  }
}

RoundRecord Simulation::communication_iteration() {
  const Selection sel = select_clients(roster_, cfg_.selection, select_rng_);
  std::vector<Vec> models;
  models.reserve(sel.ids.size());
  for (std::int64_t id : sel.ids) {
    const auto it = std::find_if(roster_.active.begin(), roster_.active.end(),
                                 [id](const ClientState& c) { return c.id == id; });
    if (it == roster_.active.end() || !it->eligible)
      throw std::runtime_error("communication_iteration: selected a non-eligible client");
    models.push_back(it->model);
  }
  global_model_ = federated_average(models, sel.weights);

  // Broadcast to every client, including previously ineligible ones.
  for (auto& c : roster_.active) {
    c.model = global_model_;
    if (cfg_.optimizer == OptimizerKind::local_adam && cfg_.reset_moments_on_broadcast)
      c.moments = zero_moments(static_cast<std::size_t>(cfg_.d));
    c.eligible = true;
  }

  RoundRecord rec;
  rec.round = round_;
  rec.iterate_norm = norm(global_model_);
  double loss_sum = 0.0;
  for (auto& c : roster_.active)
    loss_sum += logistic_loss(shard(c.shard_index), cfg_.lambda, global_model_);
  rec.global_loss = loss_sum / static_cast<double>(roster_.active.size());
  rec.selected_ids = sel.ids;
  return rec;
}

void Simulation::churn_event() {
  apply_churn(roster_, cfg_.churn, round_, cfg_.d, next_client_id_, churn_rng_, events_);
}

void Simulation::force_churn_event(const ChurnConfig& cfg) {
  apply_churn(roster_, cfg, round_, cfg_.d, next_client_id_, churn_rng_, events_);
}

RoundRecord Simulation::run_round() {
  ++round_;
  const std::size_t events_before = events_.size();
  for (int h = 0; h < cfg_.schedule.local_steps_per_round; ++h) {
    local_update_iteration();
    if (cfg_.churn.timing == ChurnTiming::per_iteration) churn_event();
  }
  RoundRecord rec = communication_iteration();
  churn_event();  // per-round timing; for per-iteration this is the comm iteration's event
  for (std::size_t i = events_before; i < events_.size(); ++i) {
    if (events_[i].kind == ChurnEvent::Kind::join) ++rec.n_joined;
    if (events_[i].kind == ChurnEvent::Kind::leave) ++rec.n_left;
  }
  rec.n_clients = static_cast<int>(roster_.active.size());
  rec.n_eligible = roster_.eligible_count();
  return rec;
}

RoundRecord Simulation::initial_record() {
  RoundRecord rec;
  rec.round = 0;
  rec.iterate_norm = norm(global_model_);
  double loss_sum = 0.0;
  for (auto& c : roster_.active)
    loss_sum += logistic_loss(shard(c.shard_index), cfg_.lambda, global_model_);
  rec.global_loss = loss_sum / static_cast<double>(roster_.active.size());
  rec.n_clients = static_cast<int>(roster_.active.size());
  rec.n_eligible = roster_.eligible_count();
  return rec;
}

RunRecord Simulation::run_experiment() {
  RunRecord run;
  run.rounds.reserve(static_cast<std::size_t>(cfg_.schedule.total_rounds) + 1);
  run.rounds.push_back(initial_record());
  for (int k = 0; k < cfg_.schedule.total_rounds; ++k) run.rounds.push_back(run_round());
  run.events = events_;
  return run;
}

}  // namespace openfl
