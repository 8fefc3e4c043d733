#pragma once

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "taskexplore/experiment.hpp"

namespace taskexplore {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitPartialFailure = 2;

namespace detail {

struct SharedFlags {
  std::string config;
  std::string objective = "task-oriented";
  std::string seeds = "0";
  int n_batches = -1;
  bool noiseless = false;
  std::string out;
};

inline void add_shared_flags(CLI::App* sub, SharedFlags& f, bool with_objective, bool with_batches) {
  sub->add_option("--config", f.config, "Key-value config file; flags given on the command line take precedence");
  if (with_objective)
    sub->add_option("--objective", f.objective, "task-oriented, task-agnostic or both")
        ->check(CLI::IsMember({"task-oriented", "task-agnostic", "both"}))
        ->capture_default_str();
  sub->add_option("--seeds,--seed", f.seeds, "Seed list, e.g. 0..4 or 0,3,7")->capture_default_str();
  if (with_batches) sub->add_option("--n-batches", f.n_batches, "Training batches")->check(CLI::NonNegativeNumber);
  sub->add_flag("--noiseless", f.noiseless, "Disable all process, observation and measurement noise");
  sub->add_option("--out", f.out, "Output directory");
}

inline void add_lqr_flags(CLI::App* sub, LqrExperimentParams& p) {
  sub->add_option("--n", p.n, "State dimension")->capture_default_str();
  sub->add_option("--m", p.m, "Input dimension")->capture_default_str();
  sub->add_option("--theta-mean", p.theta_mean, "Eigenvalue means (n values)")->delimiter(',');
  sub->add_option("--theta-std", p.theta_std)->capture_default_str();
  sub->add_option("--theta-cap", p.theta_cap)->capture_default_str();
  sub->add_option("--obs-noise", p.obs_noise_std)->capture_default_str();
  sub->add_option("--dyn-noise", p.dyn_noise_std)->capture_default_str();
  sub->add_option("--q-diag", p.q_diag, "Task state cost diagonal (n values)")->delimiter(',');
  sub->add_option("--r-diag", p.r_diag, "Task input cost diagonal (m values)")->delimiter(',');
  sub->add_option("--task-horizon", p.task_horizon)->capture_default_str();
  sub->add_option("--explore-horizon", p.explore_horizon)->capture_default_str();
  sub->add_option("--n-train", p.n_train)->capture_default_str();
  sub->add_option("--n-test", p.n_test)->capture_default_str();
}

inline void add_lqr_training_flags(CLI::App* sub, LqrExperimentParams& p) {
  sub->add_option("--lr", p.adam.alpha)->capture_default_str();
  sub->add_option("--beta1", p.adam.beta1)->capture_default_str();
  sub->add_option("--beta2", p.adam.beta2)->capture_default_str();
  sub->add_option("--adam-eps", p.adam.eps)->capture_default_str();
  sub->add_option("--weight-decay", p.adam.weight_decay)->capture_default_str();
  sub->add_option("--batch-size", p.batch_size)->capture_default_str();
  sub->add_option("--eval-interval", p.eval_interval)->capture_default_str();
  sub->add_option("--fd-delta", p.fd_delta)->capture_default_str();
  sub->add_option("--fd-bound", p.fd_bound)->capture_default_str();
  sub->add_option("--gamma", p.gamma, "Exploration regularizer weight")->capture_default_str();
  sub->add_option("--reg-q", p.reg_q)->capture_default_str();
  sub->add_option("--reg-r", p.reg_r)->capture_default_str();
  sub->add_option("--init-gain-std", p.init_gain_std)->capture_default_str();
  sub->add_option("--init-x0-std", p.init_x0_std)->capture_default_str();
  sub->add_option("--clip-factor", p.clip_factor, "Gradient clip multiple of the recent median norm; 0 disables")
      ->capture_default_str();
  sub->add_option("--clip-window", p.clip_window)->capture_default_str();
}

inline void add_pouring_flags(CLI::App* sub, PouringTrainConfig& p) {
  sub->add_option("--radius", p.geom.radius)->capture_default_str();
  sub->add_option("--height", p.geom.height)->capture_default_str();
  sub->add_option("--density", p.geom.density)->capture_default_str();
  sub->add_option("--goal-mean", p.goal.goal_mean)->capture_default_str();
  sub->add_option("--goal-std", p.goal.goal_std)->capture_default_str();
  sub->add_option("--goal-lo", p.goal.lo)->capture_default_str();
  sub->add_option("--goal-hi", p.goal.hi)->capture_default_str();
  sub->add_option("--meas-noise", p.meas_noise_std)->capture_default_str();
  sub->add_option("--pour-noise", p.pour_noise_std)->capture_default_str();
  sub->add_option("--mass-lo", p.mass_lo)->capture_default_str();
  sub->add_option("--mass-hi", p.mass_hi)->capture_default_str();
  sub->add_option("--horizon", p.horizon)->capture_default_str();
  sub->add_option("--lr", p.adam.alpha)->capture_default_str();
  sub->add_option("--beta1", p.adam.beta1)->capture_default_str();
  sub->add_option("--beta2", p.adam.beta2)->capture_default_str();
  sub->add_option("--adam-eps", p.adam.eps)->capture_default_str();
  sub->add_option("--weight-decay", p.adam.weight_decay)->capture_default_str();
  sub->add_option("--fd-delta", p.fd_delta)->capture_default_str();
  sub->add_option("--fd-samples", p.fd_samples)->capture_default_str();
  sub->add_option("--p-lower", p.p_lower)->capture_default_str();
  sub->add_option("--p-upper", p.p_upper)->capture_default_str();
  sub->add_option("--batch-size", p.batch_size)->capture_default_str();
  sub->add_option("--init-p", p.init_p)->capture_default_str();
  sub->add_option("--eval-episodes", p.eval_episodes)->capture_default_str();
}

/// Long flag name of an argument such as "--lr=0.1" ("--seed" maps to "--seeds").
inline std::string flag_name(const std::string& arg) {
  if (arg.rfind("--", 0) != 0) return "";
  std::string name = arg.substr(0, arg.find('='));
  return name == "--seed" ? "--seeds" : name;
}

/// Splices the entries of a `--config` file into the argument list as flags,
/// right after the subcommand. Keys may sit at top level or in a section named
/// after the subcommand. Flags present on the command line are not overridden.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty() || args[0].rfind("-", 0) == 0) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;

  std::vector<std::string> given;
  for (const std::string& a : args) given.push_back(flag_name(a));
  const std::string& command = args[0];

  std::vector<std::string> from_file;
  for (const CLI::ConfigItem& item : CLI::ConfigTOML().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == command))
      throw CLI::ConversionError("config: section '" + item.fullname() + "' does not belong to '" + command + "'");
    const std::string flag = "--" + item.name;
    if (flag == "--config") throw CLI::ConversionError("config: nested config files are not supported");
    if (std::find(given.begin(), given.end(), flag_name(flag)) != given.end()) continue;
    if (flag == "--noiseless") {
      const std::string v = item.inputs.empty() ? "true" : item.inputs.front();
      if (v == "true" || v == "1") from_file.push_back(flag);
      else if (v != "false" && v != "0") throw CLI::ConversionError("config: noiseless must be true or false");
      continue;
    }
    std::string joined;
    for (const std::string& v : item.inputs) joined += (joined.empty() ? "" : ",") + v;
    from_file.push_back(flag + "=" + joined);
  }
  std::vector<std::string> out{command};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace detail

/// Command-line entry point. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Task-driven exploration experiments", "explore"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  ExperimentConfig lqr_cfg;
  ExperimentConfig pour_cfg;
  pour_cfg.experiment = ExperimentKind::kPouring;
  ExperimentConfig reps_cfg;
  reps_cfg.experiment = ExperimentKind::kRepsSimopt;

  detail::SharedFlags lqr_flags;
  detail::SharedFlags pour_flags;
  detail::SharedFlags reps_flags;

  CLI::App* lqr = app.add_subcommand("lqr", "Train exploration policies on random linear systems");
  detail::add_shared_flags(lqr, lqr_flags, true, true);
  detail::add_lqr_flags(lqr, lqr_cfg.lqr);
  detail::add_lqr_training_flags(lqr, lqr_cfg.lqr);

  CLI::App* pour = app.add_subcommand("pour", "Train the measurement allocation of the pouring task");
  detail::add_shared_flags(pour, pour_flags, true, true);
  detail::add_pouring_flags(pour, pour_cfg.pouring);

  CLI::App* reps = app.add_subcommand("reps-simopt", "Compare REPS identification with the closed-form estimate");
  detail::add_shared_flags(reps, reps_flags, false, false);
  detail::add_lqr_flags(reps, reps_cfg.lqr);
  reps->add_option("--init-gain-std", reps_cfg.lqr.init_gain_std)->capture_default_str();
  reps->add_option("--init-x0-std", reps_cfg.lqr.init_x0_std)->capture_default_str();
  reps->add_option("--iters", reps_cfg.reps.iters)->capture_default_str();
  reps->add_option("--samples", reps_cfg.reps.samples)->capture_default_str();
  reps->add_option("--eps-kl", reps_cfg.reps.eps_kl)->capture_default_str();
  reps->add_option("--prior-std", reps_cfg.reps.prior_std)->capture_default_str();
  reps->add_option("--explore-start", reps_cfg.reps.explore_start, "unit or policy")
      ->check(CLI::IsMember({"unit", "policy"}))
      ->capture_default_str();
  reps->add_option("--prior-center", reps_cfg.reps.prior_center, "truth or mean")
      ->check(CLI::IsMember({"truth", "mean"}))
      ->capture_default_str();

  try {
    const std::vector<std::string> expanded = detail::expand_config(args);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }

  ExperimentConfig* cfg = nullptr;
  detail::SharedFlags* flags = nullptr;
  if (lqr->parsed()) {
    cfg = &lqr_cfg;
    flags = &lqr_flags;
  } else if (pour->parsed()) {
    cfg = &pour_cfg;
    flags = &pour_flags;
  } else {
    cfg = &reps_cfg;
    flags = &reps_flags;
  }

  RunArtifacts art;
  try {
    cfg->objectives = parse_objectives(flags->objective);
    cfg->seeds = parse_seed_list(flags->seeds);
    cfg->noiseless = flags->noiseless;
    if (flags->n_batches >= 0) {
      cfg->lqr.n_batches = flags->n_batches;
      cfg->pouring.n_batches = flags->n_batches;
    }
    cfg->output_dir = flags->out.empty() ? "runs/" + to_string(cfg->experiment) : flags->out;
    cfg->validate();
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }

  try {
    art = run_experiment(*cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitPartialFailure;
  }

  if (cfg->experiment == ExperimentKind::kRepsSimopt) {
    nlohmann::json report = nlohmann::json::array();
    for (const auto& run : art.summary["runs"]) {
      nlohmann::json r = {{"seed", run["seed"]}};
      if (run["ok"].get<bool>()) {
        r["linf_reps_vs_closed_form"] = run["result"]["linf_reps_vs_closed_form"];
        r["linf_closed_form_vs_truth"] = run["result"]["linf_closed_form_vs_truth"];
        r["stalled"] = run["result"]["stalled"];
      } else {
        r["error"] = run["error"];
      }
      report.push_back(r);
    }
    out << report.dump(2) << '\n';
  } else {
    out << "wrote " << art.curve_csv.string() << ", " << art.summary_json.string() << '\n';
    for (const auto& [group, agg] : art.summary["aggregate"].items()) out << group << ": " << agg.dump() << '\n';
  }
  for (const std::string& f : art.failures) err << "failed: " << f << '\n';
  return art.exit_code;
}

}  // namespace taskexplore
