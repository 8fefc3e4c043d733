#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "taskexplore/parallel.hpp"
#include "taskexplore/pipeline.hpp"
#include "taskexplore/pouring.hpp"
#include "taskexplore/reps_simopt.hpp"

namespace taskexplore {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { kLqr, kPouring, kRepsSimopt };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kLqr: return "lqr";
    case ExperimentKind::kPouring: return "pouring";
    case ExperimentKind::kRepsSimopt: return "reps-simopt";
  }
  return "?";
}

/// Settings of the REPS identification cross-check.
struct RepsSimoptParams {
  int iters = 10;
  int samples = 50;
  double eps_kl = 1.0;
  double prior_std = 0.2;  // prior covariance is prior_std^2 * I
  /// Prior mean: "truth" (the system's own theta) or "mean" (the theta
  /// distribution mean).
  std::string prior_center = "truth";
  /// Exploration start: "unit" puts +-1 on every eigen-coordinate so each
  /// direction is excited; "policy" uses the seed's random initial x0.
  std::string explore_start = "unit";

  void validate() const {
    if (iters < 0) throw std::invalid_argument("reps-simopt: iters must be >= 0");
    if (samples < 2) throw std::invalid_argument("reps-simopt: samples must be >= 2");
    if (!(eps_kl > 0.0)) throw std::invalid_argument("reps-simopt: eps_kl must be > 0");
    if (!(prior_std > 0.0)) throw std::invalid_argument("reps-simopt: prior_std must be > 0");
    if (prior_center != "truth" && prior_center != "mean")
      throw std::invalid_argument("reps-simopt: prior_center must be 'truth' or 'mean'");
    if (explore_start != "unit" && explore_start != "policy")
      throw std::invalid_argument("reps-simopt: explore_start must be 'unit' or 'policy'");
  }
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kLqr;
  std::vector<Objective> objectives{Objective::kTaskOriented};
  std::vector<std::uint64_t> seeds{0};
  bool noiseless = false;
  LqrExperimentParams lqr;
  PouringTrainConfig pouring;
  RepsSimoptParams reps;
  std::string output_dir = "runs";

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("seeds: at least one seed is required");
    if (objectives.empty()) throw std::invalid_argument("objective: at least one objective is required");
    if (output_dir.empty()) throw std::invalid_argument("out: output directory must be nonempty");
    switch (experiment) {
      case ExperimentKind::kLqr: lqr.validate(); break;
      case ExperimentKind::kPouring: pouring.validate(); break;
      case ExperimentKind::kRepsSimopt:
        lqr.validate();
        reps.validate();
        break;
    }
  }
};

/// Parses "3", "0..4", "0,2,5" or combinations such as "0..2,7". Ranges are
/// inclusive; duplicates are dropped and the result is sorted.
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto parse_one = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("seeds: '" + s + "' is not a nonnegative integer");
    return std::stoull(s);
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const std::size_t dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_one(item));
    } else {
      const std::uint64_t lo = parse_one(item.substr(0, dots));
      const std::uint64_t hi = parse_one(item.substr(dots + 2));
      if (lo > hi) throw std::invalid_argument("seeds: empty range '" + item + "'");
      if (hi - lo > 100000) throw std::invalid_argument("seeds: range '" + item + "' is too large");
      for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<Objective> parse_objectives(const std::string& text) {
  if (text == "both") return {Objective::kTaskOriented, Objective::kTaskAgnostic};
  return {parse_objective(text)};
}

/// 12 significant digits; identical across platforms for the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

inline nlohmann::json vec_json(const std::vector<double>& v) { return nlohmann::json(v); }

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace detail

/// Fully resolved configuration of the chosen experiment.
inline nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["experiment"] = to_string(cfg.experiment);
  std::vector<std::string> objectives;
  for (Objective o : cfg.objectives) objectives.push_back(to_string(o));
  j["objectives"] = objectives;
  j["seeds"] = cfg.seeds;
  j["noiseless"] = cfg.noiseless;
  if (cfg.experiment != ExperimentKind::kPouring) {
    const LqrExperimentParams& p = cfg.lqr;
    j["lqr"] = {{"n", p.n},
                {"m", p.m},
                {"theta_mean", detail::vec_json(p.theta_mean)},
                {"theta_std", p.theta_std},
                {"theta_cap", p.theta_cap},
                {"obs_noise_std", p.obs_noise_std},
                {"dyn_noise_std", p.dyn_noise_std},
                {"q_diag", detail::vec_json(p.q_diag)},
                {"r_diag", detail::vec_json(p.r_diag)},
                {"task_horizon", p.task_horizon},
                {"explore_horizon", p.explore_horizon},
                {"n_train", p.n_train},
                {"n_test", p.n_test},
                {"lr", p.adam.alpha},
                {"beta1", p.adam.beta1},
                {"beta2", p.adam.beta2},
                {"adam_eps", p.adam.eps},
                {"weight_decay", p.adam.weight_decay},
                {"batch_size", p.batch_size},
                {"n_batches", p.n_batches},
                {"eval_interval", p.eval_interval},
                {"fd_delta", p.fd_delta},
                {"fd_bound", p.fd_bound},
                {"gamma", p.gamma},
                {"reg_q", p.reg_q},
                {"reg_r", p.reg_r},
                {"init_gain_std", p.init_gain_std},
                {"init_x0_std", p.init_x0_std},
                {"clip_factor", p.clip_factor},
                {"clip_window", p.clip_window}};
  }
  if (cfg.experiment == ExperimentKind::kPouring) {
    const PouringTrainConfig& p = cfg.pouring;
    j["pouring"] = {{"radius", p.geom.radius},
                    {"height", p.geom.height},
                    {"density", p.geom.density},
                    {"goal_mean", p.goal.goal_mean},
                    {"goal_std", p.goal.goal_std},
                    {"goal_lo", p.goal.lo},
                    {"goal_hi", p.goal.hi},
                    {"meas_noise_std", p.meas_noise_std},
                    {"pour_noise_std", p.pour_noise_std},
                    {"mass_lo", p.mass_lo},
                    {"mass_hi", p.mass_hi},
                    {"horizon", p.horizon},
                    {"lr", p.adam.alpha},
                    {"beta1", p.adam.beta1},
                    {"beta2", p.adam.beta2},
                    {"adam_eps", p.adam.eps},
                    {"weight_decay", p.adam.weight_decay},
                    {"fd_delta", p.fd_delta},
                    {"p_lower", p.p_lower},
                    {"p_upper", p.p_upper},
                    {"fd_samples", p.fd_samples},
                    {"batch_size", p.batch_size},
                    {"n_batches", p.n_batches},
                    {"init_p", p.init_p},
                    {"eval_episodes", p.eval_episodes}};
  }
  if (cfg.experiment == ExperimentKind::kRepsSimopt) {
    j["reps"] = {{"iters", cfg.reps.iters},
                 {"samples", cfg.reps.samples},
                 {"eps_kl", cfg.reps.eps_kl},
                 {"prior_std", cfg.reps.prior_std},
                 {"prior_center", cfg.reps.prior_center},
                 {"explore_start", cfg.reps.explore_start}};
  }
  return j;
}

/// One row of curve.csv; `values` follow the experiment's header.
struct CurveRow {
  std::uint64_t seed = 0;
  std::string objective;
  int step = 0;
  std::vector<double> values;
};

struct JobOutcome {
  std::uint64_t seed = 0;
  std::string objective;
  bool ok = false;
  std::string error;
  std::vector<CurveRow> rows;
  nlohmann::json result;
};

struct RunArtifacts {
  std::filesystem::path curve_csv;
  std::filesystem::path summary_json;
  std::filesystem::path manifest;
  nlohmann::json summary;
  std::vector<std::string> failures;
  int exit_code = 0;
};

/// Result of the REPS identification cross-check for one seed.
struct RepsCheck {
  Vec theta;
  Vec closed_form;
  RepsSimoptResult reps;
  double linf = 0.0;  // ||reps - closed_form||_inf
};

/// Rolls out the seed's initial exploration gains on its first test system
/// and identifies the eigenvalues both in closed form and with REPS.
inline RepsCheck run_reps_check(const LqrExperimentParams& params, const RepsSimoptParams& rp, std::uint64_t seed,
                                bool noiseless) {
  const LqrWorld w = make_lqr_world(params, seed, Objective::kTaskOriented, noiseless);
  const LqrSetup& setup = w.training.setup;
  const LinearSystem sys = setup.system(w.training.test_thetas[0]);
  Rng explore_rng = StreamKey{seed, Phase::kDemo, 0, 0}.stream(kExploreChannel);
  Vec x0 = w.initial_policy.x0_explore;
  if (rp.explore_start == "unit") {
    Rng sign_rng = substream(seed, Phase::kDemo, 1, 0);
    Vec signs(setup.state_dim());
    for (double& s : signs) s = sign_rng.uniform() < 0.5 ? -1.0 : 1.0;
    x0 = setup.basis_u * signs;
  }
  const Trajectory traj = rollout(sys, LinearFeedback{&w.initial_policy.gains_ke}, x0,
                                  w.initial_policy.explore_horizon, explore_rng, noiseless);
  RepsCheck out;
  out.theta = sys.theta;
  out.closed_form = simopt_closed_form(sys.basis_u, sys.input_b, traj, setup.theta_dist.cap);
  const auto n = setup.state_dim();
  const Vec& center = rp.prior_center == "truth" ? sys.theta : setup.theta_dist.mean;
  const RepsState prior{center, rp.prior_std * rp.prior_std * Mat::Identity(n, n), rp.eps_kl};
  Rng reps_rng = substream(seed, Phase::kReps, 0, 0);
  out.reps = reps_simopt(sys.basis_u, sys.input_b, traj, prior, rp.iters, rp.samples, setup.theta_dist.cap, reps_rng);
  out.linf = (out.reps.theta_hat - out.closed_form).cwiseAbs().maxCoeff();
  return out;
}

namespace detail {

inline JobOutcome run_lqr_job(const ExperimentConfig& cfg, std::uint64_t seed, Objective obj) {
  JobOutcome job;
  const LqrWorld w = make_lqr_world(cfg.lqr, seed, obj, cfg.noiseless);
  const TrainResult r = train_exploration(w.training, w.reg, w.initial_policy);
  for (const CurvePoint& pt : r.curve) job.rows.push_back({seed, to_string(obj), pt.batch, {pt.loss, pt.regret_ratio}});
  const CurvePoint& last = r.curve.back();
  job.result = {{"final_batch", last.batch},
                {"final_loss", number_or_null(last.loss)},
                {"final_regret_ratio", number_or_null(last.regret_ratio)},
                {"baseline_regret", number_or_null(r.baseline_regret)},
                {"skipped_steps", r.skipped_steps},
                {"clipped_steps", r.clipped_steps},
                {"delta_halved", r.delta_halved},
                {"aborted", r.aborted}};
  if (r.aborted) throw std::runtime_error("training aborted after repeated non-finite losses");
  return job;
}

inline JobOutcome run_pouring_job(const ExperimentConfig& cfg, std::uint64_t seed, Objective obj) {
  JobOutcome job;
  PouringTrainConfig pc = cfg.pouring;
  pc.seed = seed;
  pc.objective = obj;
  pc.noiseless = cfg.noiseless;
  const PouringTrainResult r = train_pouring(pc);
  for (const PouringCurvePoint& pt : r.curve) job.rows.push_back({seed, to_string(obj), pt.batch, {pt.loss, pt.p_e}});
  job.result = {{"final_batch", r.curve.back().batch},
                {"final_loss", r.curve.back().loss},
                {"final_p_e", r.p_e},
                {"final_eval_cost", r.final_eval_cost}};
  return job;
}

inline JobOutcome run_reps_job(const ExperimentConfig& cfg, std::uint64_t seed) {
  JobOutcome job;
  const RepsCheck c = run_reps_check(cfg.lqr, cfg.reps, seed, cfg.noiseless);
  int it = 0;
  for (const RepsSimoptIteration& h : c.reps.history) job.rows.push_back({seed, "reps", ++it, {h.eta, h.kl, h.best_reward}});
  auto as_vector = [](const Vec& v) { return std::vector<double>(v.begin(), v.end()); };
  job.result = {{"linf_reps_vs_closed_form", c.linf},
                {"linf_closed_form_vs_truth", (c.closed_form - c.theta).cwiseAbs().maxCoeff()},
                {"theta", as_vector(c.theta)},
                {"theta_closed_form", as_vector(c.closed_form)},
                {"theta_reps", as_vector(c.reps.theta_hat)},
                {"iterations", c.reps.history.size()},
                {"stalled", c.reps.stalled}};
  return job;
}

inline std::string csv_header(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kLqr: return "seed,objective,batch,loss,regret_ratio_test";
    case ExperimentKind::kPouring: return "seed,objective,batch,loss,p_e";
    case ExperimentKind::kRepsSimopt: return "seed,objective,iteration,eta,kl,best_reward";
  }
  return "";
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return v.empty() ? std::nan("") : 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Runs every (seed, objective) job, then writes curve.csv, summary.json and
/// manifest.json into cfg.output_dir. Jobs run in parallel; output order is
/// sorted by (seed, objective, step). A failing job does not stop the others
/// and makes the exit code 2.
inline RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);

  struct Job {
    std::uint64_t seed;
    Objective objective;
  };
  std::vector<Job> jobs;
  for (std::uint64_t s : cfg.seeds) {
    if (cfg.experiment == ExperimentKind::kRepsSimopt) {
      jobs.push_back({s, Objective::kTaskOriented});
      continue;
    }
    for (Objective o : cfg.objectives) jobs.push_back({s, o});
  }

  std::vector<JobOutcome> outcomes(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const Job& job = jobs[k];
    const std::string name = cfg.experiment == ExperimentKind::kRepsSimopt ? "reps" : to_string(job.objective);
    try {
      switch (cfg.experiment) {
        case ExperimentKind::kLqr: outcomes[k] = detail::run_lqr_job(cfg, job.seed, job.objective); break;
        case ExperimentKind::kPouring: outcomes[k] = detail::run_pouring_job(cfg, job.seed, job.objective); break;
        case ExperimentKind::kRepsSimopt: outcomes[k] = detail::run_reps_job(cfg, job.seed); break;
      }
      outcomes[k].ok = true;
    } catch (const std::exception& e) {
      outcomes[k].ok = false;
      outcomes[k].error = e.what();
      outcomes[k].rows.clear();
    }
    outcomes[k].seed = job.seed;
    outcomes[k].objective = name;
  });

  std::sort(outcomes.begin(), outcomes.end(), [](const JobOutcome& a, const JobOutcome& b) {
    return std::tie(a.seed, a.objective) < std::tie(b.seed, b.objective);
  });

  RunArtifacts art;
  art.curve_csv = dir / "curve.csv";
  art.summary_json = dir / "summary.json";
  art.manifest = dir / "manifest.json";

  {
    std::ofstream csv(art.curve_csv, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + art.curve_csv.string());
    csv << detail::csv_header(cfg.experiment) << '\n';
    for (const JobOutcome& o : outcomes) {
      std::vector<CurveRow> rows = o.rows;
      std::stable_sort(rows.begin(), rows.end(), [](const CurveRow& a, const CurveRow& b) { return a.step < b.step; });
      for (const CurveRow& r : rows) {
        csv << r.seed << ',' << r.objective << ',' << r.step;
        for (double v : r.values) csv << ',' << format_number(v);
        csv << '\n';
      }
    }
  }

  const nlohmann::json resolved = config_json(cfg);
  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();
  for (const JobOutcome& o : outcomes) {
    nlohmann::json entry = {{"seed", o.seed}, {"objective", o.objective}, {"ok", o.ok}};
    if (o.ok) {
      entry["result"] = o.result;
    } else {
      entry["error"] = o.error;
      failures.push_back({{"seed", o.seed}, {"objective", o.objective}, {"error", o.error}});
      art.failures.push_back("seed " + std::to_string(o.seed) + " " + o.objective + ": " + o.error);
    }
    runs.push_back(entry);
  }

  // Aggregates over successful runs, from the same final rows written to the CSV.
  nlohmann::json aggregate = nlohmann::json::object();
  std::vector<std::string> groups;
  for (const JobOutcome& o : outcomes)
    if (std::find(groups.begin(), groups.end(), o.objective) == groups.end()) groups.push_back(o.objective);
  for (const std::string& g : groups) {
    std::vector<std::vector<double>> columns;
    std::vector<double> extra;
    for (const JobOutcome& o : outcomes) {
      if (!o.ok || o.objective != g || o.rows.empty()) continue;
      const CurveRow* last = &o.rows.front();
      for (const CurveRow& r : o.rows)
        if (r.step >= last->step) last = &r;
      columns.resize(last->values.size());
      for (std::size_t c = 0; c < last->values.size(); ++c) columns[c].push_back(last->values[c]);
      if (cfg.experiment == ExperimentKind::kPouring) extra.push_back(o.result["final_eval_cost"].get<double>());
      if (cfg.experiment == ExperimentKind::kRepsSimopt) extra.push_back(o.result["linf_reps_vs_closed_form"].get<double>());
    }
    nlohmann::json a = {{"runs", columns.empty() ? 0 : columns[0].size()}};
    const std::string header = detail::csv_header(cfg.experiment);
    std::vector<std::string> names;
    for (std::size_t pos = 0, field = 0; pos <= header.size(); ++field) {
      const std::size_t comma = header.find(',', pos);
      if (field >= 3) names.push_back(header.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    for (std::size_t c = 0; c < columns.size() && c < names.size(); ++c) {
      a["final_" + names[c] + "_mean"] = detail::number_or_null(detail::mean_of(columns[c]));
      a["final_" + names[c] + "_std"] = detail::number_or_null(detail::std_of(columns[c]));
    }
    if (!extra.empty()) {
      const std::string key = cfg.experiment == ExperimentKind::kPouring ? "final_eval_cost" : "linf_reps_vs_closed_form";
      a[key + "_mean"] = detail::mean_of(extra);
      a[key + "_std"] = detail::std_of(extra);
      if (cfg.experiment == ExperimentKind::kRepsSimopt) a[key + "_max"] = *std::max_element(extra.begin(), extra.end());
    }
    aggregate[g] = a;
  }

  art.summary = {{"version", kVersion}, {"config", resolved}, {"runs", runs}, {"aggregate", aggregate}};
  {
    std::ofstream out(art.summary_json, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + art.summary_json.string());
    out << art.summary.dump(2) << '\n';
  }

  const std::string config_text = resolved.dump();
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(config_text)));
  const nlohmann::json manifest = {{"version", kVersion},
                                   {"experiment", to_string(cfg.experiment)},
                                   {"seeds", cfg.seeds},
                                   {"config_hash_fnv1a64", hash},
                                   {"files", {"curve.csv", "summary.json"}},
                                   {"failures", failures}};
  {
    std::ofstream out(art.manifest, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + art.manifest.string());
    out << manifest.dump(2) << '\n';
  }

  art.exit_code = art.failures.empty() ? 0 : 2;
  return art;
}

}  // namespace taskexplore
