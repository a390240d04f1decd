// tawm: train / eval / sweep / curves / propcheck.
//
// Exit codes: 0 success, 1 runtime failure (or failing property), 2 bad
// invocation, unreadable input or invalid configuration.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tawm/tawm.hpp"

namespace fs = std::filesystem;
using namespace tawm;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, env, mode, integrator, checkpoints;
  std::optional<double> dt_min, dt_max, dt;
  std::optional<std::size_t> steps, episodes, threads;
  std::vector<std::string> models, repeat_models;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "flat JSON run configuration");
  app->add_option("--seed", f.seed, "root seed");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--env", f.env, "burgers|allen-cahn|wave|oscillator");
  app->add_option("--mode", f.mode, "log-uniform|uniform|fixed");
  app->add_option("--dt-min", f.dt_min, "lower end of the training dt range [s]");
  app->add_option("--dt-max", f.dt_max, "upper end of the training dt range [s]");
  app->add_option("--dt", f.dt, "fixed training dt, or the eval dt [s]");
  app->add_option("--integrator", f.integrator, "euler|rk4");
  app->add_option("--steps", f.steps, "environment steps to train for");
  app->add_option("--episodes", f.episodes, "evaluation episodes per (model, dt, seed)");
  app->add_option("--threads", f.threads, "evaluation worker threads");
}

RunConfig load(const Flags& f) {
  json user = json::object();
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw UsageError("config file not found: " + f.config);
    user = read_json_file(f.config);
  }
  auto c = RunConfig::from_json(user);
  if (f.seed) c.set("seed", *f.seed);
  if (f.out) c.set("out", *f.out);
  if (f.env) c.set("env", *f.env);
  if (f.mode) c.set("mode", *f.mode);
  if (f.dt_min) c.set("dt_min", *f.dt_min);
  if (f.dt_max) c.set("dt_max", *f.dt_max);
  if (f.dt) c.set("dt", *f.dt);
  if (f.integrator) c.set("integrator", *f.integrator);
  if (f.steps) c.set("steps", *f.steps);
  if (f.episodes) c.set("eval_episodes", *f.episodes);
  if (f.threads) c.set("threads", *f.threads);
  if (!f.models.empty()) c.set("models", f.models);
  if (!f.repeat_models.empty()) c.set("repeat_models", f.repeat_models);
  if (f.checkpoints) c.set("checkpoint_dir", *f.checkpoints);
  // Surface bad enum values before any work starts.
  (void)c.env();
  (void)c.train();
  return c;
}

struct LoadedModel {
  std::string id;
  Model model;
  double dt_train = 0.0;
};

std::vector<LoadedModel> load_models(const std::vector<std::string>& entries) {
  std::vector<LoadedModel> out;
  for (const auto& e : entries) {
    auto [id, path] = parse_model_entry(e);
    if (!fs::exists(path)) throw UsageError("model file not found: " + path);
    json extra;
    LoadedModel m{id, load_world_model<float>(path, &extra), extra.value("dt_train", 0.0)};
    out.push_back(std::move(m));
  }
  return out;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
}

int cmd_train(const Flags& f) {
  const auto c = load(f);
  c.echo();
  const auto t = c.train();
  std::cerr << "training " << env::env_name(t.env) << " (" << to_string(t.dt.mode) << ", " << to_string(t.integrator)
            << ") for " << t.total_steps << " steps -> " << t.out_dir << "\n";
  const auto res = train(t, &std::cout);
  std::cerr << "wrote " << res.checkpoints.size() << " checkpoint(s)\n";
  return 0;
}

SweepReport run_sweep(const RunConfig& c, const std::vector<double>& grid) {
  const auto plain = load_models(c.values.at("models").get<std::vector<std::string>>());
  const auto repeat = load_models(c.values.at("repeat_models").get<std::vector<std::string>>());
  if (plain.empty() && repeat.empty()) throw UsageError("no models given (config key 'models' or --model)");
  const double repeat_dt = c.values.at("repeat_dt").get<double>();
  std::vector<SweepModel> sm;
  for (const auto& m : plain) sm.push_back({m.id, &m.model, EvalKind::Plain, 0.0});
  for (const auto& m : repeat) {
    const double base = repeat_dt > 0.0 ? repeat_dt : (m.dt_train > 0.0 ? m.dt_train : env::dt_default(c.env()));
    sm.push_back({m.id + "+repeat", &m.model, EvalKind::ActionRepeat, base});
  }
  return sweep(sm, c.env(), grid, c.seeds(), c.eval(), c.threads());
}

void emit_sweep(const RunConfig& c, const SweepReport& rep, const std::string& stem) {
  const fs::path out = c.out();
  std::ostringstream csv;
  write_sweep_csv(csv, rep);
  write_file(out / (stem + ".csv"), csv.str());
  std::ostringstream svg;
  svg::write_chart(svg, sweep_chart(rep, env::env_name(c.env()) + ": episode reward vs evaluation dt"));
  write_file(out / (stem + ".svg"), svg.str());
  if (!rep.failures.empty()) {
    std::ostringstream fc;
    write_failures_csv(fc, rep);
    write_file(out / (stem + "_failures.csv"), fc.str());
    for (const auto& fl : rep.failures)
      std::cerr << "failed: " << fl.model << " dt=" << fl.dt_eval << " seed=" << fl.seed << ": " << fl.message << "\n";
  }
  std::cout << csv.str();
}

int cmd_eval(const Flags& f) {
  const auto c = load(f);
  c.echo();
  const auto rep = run_sweep(c, {c.dt()});
  emit_sweep(c, rep, "eval");
  return rep.failures.empty() ? 0 : 1;
}

int cmd_sweep(const Flags& f) {
  const auto c = load(f);
  c.echo();
  const auto rep = run_sweep(c, c.grid());
  emit_sweep(c, rep, "sweep");
  return rep.failures.empty() ? 0 : 1;
}

int cmd_curves(const Flags& f) {
  const auto c = load(f);
  const auto dir = c.values.at("checkpoint_dir").get<std::string>();
  if (dir.empty()) throw UsageError("no checkpoint directory given (config key 'checkpoint_dir' or --checkpoints)");
  if (!fs::is_directory(dir)) throw UsageError("checkpoint directory not found: " + dir);
  c.echo();
  const auto rows = learning_curve(dir, c.env(), c.grid(), c.seeds(), c.eval(), c.threads());
  std::ostringstream csv;
  write_curve_csv(csv, rows);
  write_file(fs::path(c.out()) / "curves.csv", csv.str());
  std::ostringstream svg;
  svg::write_chart(svg, curve_chart(rows, env::env_name(c.env()) + ": learning curves"));
  write_file(fs::path(c.out()) / "curves.svg", svg.str());
  std::cout << csv.str();
  for (const auto& r : rows)
    if (r.status != "ok") std::cerr << r.checkpoint << ": " << r.status << "\n";
  return 0;
}

int cmd_propcheck() {
  int failed = 0;
  for (const auto& p : props::all()) {
    const auto t0 = std::chrono::steady_clock::now();
    props::Outcome o;
    try {
      o = p.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %-40s %s (%.2fs)\n", o.passed ? "PASS" : "FAIL", p.name.c_str(), o.detail.c_str(), secs);
    failed += o.passed ? 0 : 1;
  }
  std::printf("%d failed\n", failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-aware world model: training, evaluation and checks"};
  app.require_subcommand(1);
  Flags f;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoints + log.csv");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate models at a single dt (--dt)");
  auto* sweep_cmd = app.add_subcommand("sweep", "evaluate models over a dt grid, write CSV + SVG");
  auto* curves_cmd = app.add_subcommand("curves", "learning curves over a checkpoint directory");
  auto* prop_cmd = app.add_subcommand("propcheck", "run every invariant check");
  for (auto* s : {train_cmd, eval_cmd, sweep_cmd, curves_cmd}) add_common(s, f);
  for (auto* s : {eval_cmd, sweep_cmd}) {
    s->add_option("--model", f.models, "checkpoint, as id=path or path (repeatable)");
    s->add_option("--repeat-model", f.repeat_models, "fixed-dt checkpoint evaluated with action repeat");
  }
  curves_cmd->add_option("--checkpoints", f.checkpoints, "directory of *.tawm checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (train_cmd->parsed()) return cmd_train(f);
    if (eval_cmd->parsed()) return cmd_eval(f);
    if (sweep_cmd->parsed()) return cmd_sweep(f);
    if (curves_cmd->parsed()) return cmd_curves(f);
    if (prop_cmd->parsed()) return cmd_propcheck();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
