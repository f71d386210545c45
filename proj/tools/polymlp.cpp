// polymlp: corpus generation, training, prediction and evaluation from the command line.

#include "vru/baselines.hpp"
#include "vru/config.hpp"
#include "vru/evalharness.hpp"
#include "vru/experiment.hpp"
#include "vru/gatedpredictor.hpp"
#include "vru/model_io.hpp"
#include "vru/stateclassifier.hpp"
#include "vru/synthgen.hpp"
#include "vru/trajpredictor.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace vru;

namespace
{

struct Options
{
  std::string config;
  std::vector<std::string> sets;
  std::string scenes;
  std::string split;
  std::string out;
  std::string text_out;
  std::string model;
  std::string pipeline;
  std::string classifier;
  std::string method;
  std::string mode = "four_class";
  std::string transition = "polymlp";
  std::string kind = "start";
  std::string scene_id;
  std::size_t cycles = 10000;
  bool forced_stop = false;
};

RunConfig load_config(const Options & o)
{
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg.load_file(o.config);
  }
  for (const auto & kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::vector<Scene> load_split(const Options & o, const RunConfig & cfg, const std::string & fallback)
{
  if (o.scenes.empty()) {
    throw ParameterError("no scene file given (--scenes or VRU_SCENES)");
  }
  auto scenes = load_scenes(o.scenes);
  const std::string split = o.split.empty() ? fallback : o.split;
  if (split == "all") {
    return scenes;
  }
  auto parts = split_corpus(scenes, cfg.train_fraction, cfg.seed);
  if (split == "train") {
    return std::move(parts.train);
  }
  if (split == "test") {
    return std::move(parts.test);
  }
  throw ParameterError("unknown split '" + split + "' (train, test, all)");
}

CorpusSplit load_both(const Options & o, const RunConfig & cfg)
{
  if (o.scenes.empty()) {
    throw ParameterError("no scene file given (--scenes or VRU_SCENES)");
  }
  return split_corpus(load_scenes(o.scenes), cfg.train_fraction, cfg.seed);
}

void require(const std::string & value, const char * what)
{
  if (value.empty()) {
    throw ParameterError(std::string("missing ") + what);
  }
}

void emit(const std::string & path, const std::string & text)
{
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_atomic(path, text);
  }
}

TrajectoryPredictor checked_predictor(const std::string & path, const RunConfig & cfg)
{
  require(path, "predictor model (--model)");
  auto p = load_predictor(path);
  check_fingerprint(p.input_config.fingerprint(), cfg.input, "predictor '" + path + "' input");
  check_fingerprint(p.output_config.fingerprint(), cfg.output, "predictor '" + path + "' output");
  return p;
}

StateClassifier checked_classifier(const std::string & path, const RunConfig & cfg)
{
  require(path, "classifier model (--model)");
  auto c = load_classifier(path);
  check_fingerprint(c.input_config.fingerprint(), cfg.input, "classifier '" + path + "' input");
  return c;
}

TwoStagePipeline checked_pipeline(const std::string & path, const RunConfig & cfg)
{
  require(path, "pipeline manifest (--pipeline)");
  auto p = load_pipeline(path);
  check_fingerprint(p.classifier.input_config.fingerprint(), cfg.input, "pipeline classifier input");
  for (const auto & e : p.experts.by_state) {
    if (e.mlp.layer_sizes().empty()) {
      continue;
    }
    check_fingerprint(e.input_config.fingerprint(), cfg.input, "pipeline expert input");
    check_fingerprint(e.output_config.fingerprint(), cfg.output, "pipeline expert output");
  }
  p.physmod = cfg.physmod;
  return p;
}

void log_training(const char * what, const TrainResult & r)
{
  std::clog << what << ": best epoch " << r.best_epoch << " of " << (r.curve.empty() ? 0 : r.curve.back().epoch)
            << ", validation MSE " << r.best_validation_mse << '\n';
}

// Subcommands --------------------------------------------------------------

void cmd_synth(const Options & o)
{
  const auto cfg = load_config(o);
  require(o.out, "output scene file (--out)");
  const auto scenes = generate_corpus(cfg.corpus, cfg.seed);
  save_scenes(o.out, scenes);
  std::clog << "wrote " << scenes.size() << " scenes to " << o.out << '\n';
}

void cmd_train_classifier(const Options & o)
{
  const auto cfg = load_config(o);
  require(o.out, "output model file (--out)");
  const auto scenes = load_split(o, cfg, "train");
  const auto mode = parse_classifier_mode(o.mode);
  const auto trained = train_classifier(scenes, cfg.classifier_train(), mode);
  log_training("classifier", trained.training);
  save_classifier(o.out, trained.classifier);
}

void cmd_train_predictor(const Options & o)
{
  const auto cfg = load_config(o);
  require(o.out, "output model file (--out)");
  const auto scenes = load_split(o, cfg, "train");
  const auto trained = train_predictor(scenes, cfg.predictor_train());
  log_training("predictor", trained.training);
  save_predictor(o.out, trained.predictor);
}

void cmd_train_specific(const Options & o)
{
  const auto cfg = load_config(o);
  require(o.out, "output directory (--out)");
  const auto scenes = load_split(o, cfg, "train");
  const auto experts = train_specific_predictors(scenes, cfg.predictor_train());
  const fs::path dir = o.out;
  fs::create_directories(dir);
  PipelineManifest manifest;
  for (MotionState s : kAllStates) {
    const auto name = "predictor_" + std::string(to_string(s)) + ".json";
    save_predictor(dir / name, experts.by_state[index_of(s)]);
    manifest.predictors[index_of(s)] = name;
    std::clog << to_string(s) << ": " << experts.patterns[index_of(s)] << " patterns\n";
  }
  if (!o.classifier.empty()) {
    manifest.classifier = fs::absolute(o.classifier);
    manifest.transition = o.transition == "physmod" ? TransitionExperts::PhysMod : TransitionExperts::PolyMlp;
    if (o.transition != "physmod" && o.transition != "polymlp") {
      throw ParameterError("unknown transition experts '" + o.transition + "'");
    }
    save_manifest(dir / "pipeline.json", manifest);
    std::clog << "wrote " << (dir / "pipeline.json").string() << '\n';
  }
}

void cmd_classify(const Options & o)
{
  const auto cfg = load_config(o);
  const auto classifier = checked_classifier(o.model, cfg);
  const auto scenes = load_split(o, cfg, "test");
  const auto scores = classify_scenes(classifier, scenes);
  std::ostringstream out;
  out << "scene_id,t,p_waiting,p_starting,p_moving,p_stopping,state\n";
  char buf[256];
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    if (!o.scene_id.empty() && scenes[s].id != o.scene_id) {
      continue;
    }
    for (std::size_t i = 0; i < scores[s].steps.size(); ++i) {
      const auto & p = scores[s].posterior[i];
      std::snprintf(buf, sizeof buf, "%.4f,%.6f,%.6f,%.6f,%.6f,", scenes[s].trajectory.t[scores[s].steps[i]], p.p[0],
                    p.p[1], p.p[2], p.p[3]);
      out << scenes[s].id << ',' << buf << to_string(p.argmax()) << '\n';
    }
  }
  emit(o.out, out.str());
}

SceneRunner runner_for(const std::string & method, const RunConfig & cfg, const Options & o,
                       std::optional<TrajectoryPredictor> & predictor, std::optional<TwoStagePipeline> & pipeline)
{
  if (method == "monolithic" || method == "polymlp") {
    predictor = checked_predictor(o.model, cfg);
    return polymlp_runner(*predictor);
  }
  if (method == "cv-kf") {
    return cv_kf_runner(cfg.kf);
  }
  if (method == "kinematic") {
    return kinematic_runner(cfg.ego);
  }
  if (method == "two-stage" || method == "gt-two-stage" || method == "physmod") {
    pipeline = checked_pipeline(o.pipeline, cfg);
    if (method == "physmod") {
      pipeline->transition = TransitionExperts::PhysMod;
    }
    GateSource gate = GateSource::Classifier;
    if (method == "gt-two-stage") {
      gate = GateSource::GroundTruth;
    } else if (o.forced_stop) {
      gate = GateSource::ForcedStop;
    }
    return two_stage_runner(*pipeline, gate, cfg.forced_stop_rate, cfg.seed);
  }
  throw ParameterError("unknown prediction method '" + method + "'");
}

void cmd_predict(const Options & o)
{
  const auto cfg = load_config(o);
  std::optional<TrajectoryPredictor> predictor;
  std::optional<TwoStagePipeline> pipeline;
  const auto runner = runner_for(o.method, cfg, o, predictor, pipeline);
  const auto scenes = load_split(o, cfg, "test");
  std::ostringstream out;
  out << "scene_id,now,t_now,t_pred,x,y\n";
  char buf[256];
  bool found = o.scene_id.empty();
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    if (!o.scene_id.empty() && scenes[s].id != o.scene_id) {
      continue;
    }
    found = true;
    const auto steps = evaluation_steps(scenes[s], cfg.input, cfg.eval_stride);
    const auto preds = runner(s, scenes[s], steps);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      for (std::size_t j = 0; j < preds[i].t_pred.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%zu,%.4f,%.2f,%.6f,%.6f", steps[i], scenes[s].trajectory.t[steps[i]],
                      preds[i].t_pred[j], preds[i].positions[j].x(), preds[i].positions[j].y());
        out << scenes[s].id << ',' << buf << '\n';
      }
    }
  }
  if (!found) {
    throw ParameterError("scene '" + o.scene_id + "' not in the selected split");
  }
  emit(o.out, out.str());
}

void cmd_evaluate(const Options & o)
{
  const auto cfg = load_config(o);
  require(o.method, "method (--method)");
  const auto data = load_both(o, cfg);
  EvalReport report;
  report.method = o.method;
  if (o.method == "classifier") {
    const auto classifier = checked_classifier(o.model, cfg);
    const auto ev = evaluate_classifier(classifier, data.train, data.test, cfg.threshold_step);
    report.confusion = ev.confusion;
    report.start_binary = ev.start_binary;
    report.start_threshold = ev.start_threshold;
    const auto scores = classify_scenes(classifier, data.test);
    const auto sweep = classifier.mode == ClassifierMode::TwoClassStop ? stop_sweep_scenes(scores, data.test)
                                                                       : start_sweep_scenes(scores, data.test);
    report.sweep = early_detection_sweep(sweep, threshold_grid(cfg.sweep_step));
  } else if (o.method == "imm") {
    const auto imm = evaluate_imm(data.train, data.test, cfg.imm, cfg.input, cfg.threshold_step);
    report.start_binary = imm.test;
    report.start_threshold = imm.threshold;
  } else {
    RunConfig run = cfg;
    if (o.method == "cv-kf" && cfg.kf_tune) {
      const auto tuning = tune_cv_kf(data.train, cfg.kf, cfg.kf_q_grid, cfg.input, cfg.eval_stride);
      run.kf.q = tuning.best_q;
      std::clog << "cv-kf: q = " << tuning.best_q << " selected on the training split\n";
    }
    std::optional<TrajectoryPredictor> predictor;
    std::optional<TwoStagePipeline> pipeline;
    const auto runner = runner_for(o.method, run, o, predictor, pipeline);
    report.asaee = evaluate_asaee(data.test, cfg.input, cfg.eval_stride, runner);
    if (o.forced_stop) {
      report.method += " (forced stop gate " + std::to_string(cfg.forced_stop_rate) + ")";
    }
  }
  emit(o.out.empty() ? std::string() : o.out, report.to_json().dump(1) + "\n");
  if (!o.text_out.empty() || !o.out.empty()) {
    if (!o.text_out.empty()) {
      write_text_atomic(o.text_out, report.to_text());
    }
  }
  if (!o.out.empty()) {
    std::cout << report.to_text();
  }
}

void cmd_sweep(const Options & o)
{
  const auto cfg = load_config(o);
  const auto classifier = checked_classifier(o.model, cfg);
  const auto scenes = load_split(o, cfg, "test");
  const auto scores = classify_scenes(classifier, scenes);
  std::vector<SweepScene> sweep;
  if (o.kind == "start") {
    sweep = start_sweep_scenes(scores, scenes);
  } else if (o.kind == "stop") {
    sweep = stop_sweep_scenes(scores, scenes);
  } else {
    throw ParameterError("unknown sweep kind '" + o.kind + "' (start, stop)");
  }
  if (sweep.empty()) {
    throw std::runtime_error("no scenes with the required events in the selected split");
  }
  emit(o.out, sweep_csv(early_detection_sweep(sweep, threshold_grid(cfg.sweep_step))));
}

void cmd_time(const Options & o)
{
  const auto cfg = load_config(o);
  const auto scenes = load_split(o, cfg, "test");
  if (scenes.empty() || o.cycles == 0) {
    throw ParameterError("need scenes and at least one cycle");
  }
  std::vector<std::pair<std::size_t, std::size_t>> cycles;  // (scene, step)
  for (std::size_t s = 0; s < scenes.size() && cycles.size() < o.cycles; ++s) {
    for (auto k : evaluation_steps(scenes[s], cfg.input, 1)) {
      cycles.emplace_back(s, k);
    }
  }
  if (cycles.empty()) {
    throw std::runtime_error("no evaluable time steps");
  }
  std::vector<EgoKinematics> kin(scenes.size());
  volatile double sink = 0.0;
  LatencyStats stats;
  if (o.method == "monolithic" || o.method == "polymlp") {
    const auto p = checked_predictor(o.model, cfg);
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      kin[s] = ego_velocity(scenes[s].trajectory, p.ego);
    }
    stats = time_cycles(
      [&](std::size_t i) {
        const auto [s, k] = cycles[i % cycles.size()];
        sink = sink + p.predict(kin[s].velocity, kin[s].frames[k], k, scenes[s].dt())->positions.back().x();
      },
      o.cycles);
  } else if (o.method == "two-stage" || o.method == "physmod") {
    auto p = checked_pipeline(o.pipeline, cfg);
    if (o.method == "physmod") {
      p.transition = TransitionExperts::PhysMod;
    }
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      kin[s] = ego_velocity(scenes[s].trajectory, p.experts.by_state[0].ego);
    }
    stats = time_cycles(
      [&](std::size_t i) {
        const auto [s, k] = cycles[i % cycles.size()];
        sink = sink + p.predict(scenes[s].trajectory, kin[s], k, scenes[s].dt())->positions.back().x();
      },
      o.cycles);
  } else {
    throw ParameterError("time supports monolithic, two-stage and physmod");
  }
  EvalReport report;
  report.method = o.method;
  report.latency = stats;
  emit(o.out, report.to_json().dump(1) + "\n");
}

std::string key_help()
{
  std::string s = "\nConfiguration keys (--config file with key = value lines, --set key=value):\n";
  for (const auto & d : config_key_docs()) {
    s += "  " + d.key + std::string(d.key.size() < 24 ? 24 - d.key.size() : 1, ' ') + d.help + '\n';
  }
  s += "\nEnvironment: VRU_CONFIG, VRU_SCENES, VRU_MODEL, VRU_PIPELINE supply default paths.\n";
  return s;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"VRU motion-state classification and trajectory prediction"};
  app.footer(key_help());
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App * sub) {
    sub->add_option("--config", o.config, "run configuration file")->envname("VRU_CONFIG");
    sub->add_option("--set", o.sets, "override one configuration key (key=value), repeatable");
  };
  auto scenes = [&](CLI::App * sub, const char * split_default) {
    sub->add_option("--scenes", o.scenes, "scene file (.jsonl or .csv)")->envname("VRU_SCENES");
    sub->add_option("--split", o.split, std::string("train, test or all (default ") + split_default + ")");
  };

  auto * synth = app.add_subcommand("synth", "generate a synthetic corpus");
  common(synth);
  synth->add_option("--out", o.out, "scene file to write")->required();
  synth->callback([&] { cmd_synth(o); });

  auto * tc = app.add_subcommand("train-classifier", "train the motion-state classifier");
  common(tc);
  scenes(tc, "train");
  tc->add_option("--out", o.out, "model file to write")->required();
  tc->add_option("--mode", o.mode, "four_class, two_class_start or two_class_stop");
  tc->callback([&] { cmd_train_classifier(o); });

  auto * tp = app.add_subcommand("train-predictor", "train the monolithic trajectory predictor");
  common(tp);
  scenes(tp, "train");
  tp->add_option("--out", o.out, "model file to write")->required();
  tp->callback([&] { cmd_train_predictor(o); });

  auto * ts = app.add_subcommand("train-specific", "train one predictor per scene class");
  common(ts);
  scenes(ts, "train");
  ts->add_option("--out", o.out, "output directory")->required();
  ts->add_option("--classifier", o.classifier, "four-class classifier; writes pipeline.json when given");
  ts->add_option("--transition", o.transition, "Starting/Stopping experts in the manifest: polymlp or physmod");
  ts->callback([&] { cmd_train_specific(o); });

  auto * cl = app.add_subcommand("classify", "write per-frame posteriors as CSV");
  common(cl);
  scenes(cl, "test");
  cl->add_option("--model", o.model, "classifier model")->envname("VRU_MODEL");
  cl->add_option("--scene-id", o.scene_id, "restrict to one scene");
  cl->add_option("--out", o.out, "CSV file (default stdout)");
  cl->callback([&] { cmd_classify(o); });

  auto * pr = app.add_subcommand("predict", "write predicted trajectories as CSV");
  common(pr);
  scenes(pr, "test");
  pr->add_option("--method", o.method, "monolithic, two-stage, cv-kf or physmod")->required();
  pr->add_option("--model", o.model, "predictor model (monolithic)")->envname("VRU_MODEL");
  pr->add_option("--pipeline", o.pipeline, "pipeline manifest (two-stage, physmod)")->envname("VRU_PIPELINE");
  pr->add_option("--scene-id", o.scene_id, "restrict to one scene");
  pr->add_option("--out", o.out, "CSV file (default stdout)");
  pr->callback([&] { cmd_predict(o); });

  auto * ev = app.add_subcommand("evaluate", "evaluate one method on the test split");
  common(ev);
  ev->add_option("--scenes", o.scenes, "scene file; split by seed and train_fraction")->envname("VRU_SCENES");
  ev->add_option("--method", o.method,
                 "polymlp, cv-kf, kinematic, two-stage, gt-two-stage, physmod, classifier or imm")
    ->required();
  ev->add_option("--model", o.model, "predictor or classifier model")->envname("VRU_MODEL");
  ev->add_option("--pipeline", o.pipeline, "pipeline manifest")->envname("VRU_PIPELINE");
  ev->add_flag("--forced-stop", o.forced_stop, "force Stopping gates on forced_stop_rate of Moving frames");
  ev->add_option("--out", o.out, "JSON report (default stdout)");
  ev->add_option("--text", o.text_out, "text report");
  ev->callback([&] { cmd_evaluate(o); });

  auto * sw = app.add_subcommand("sweep", "early-detection sweep as CSV");
  common(sw);
  scenes(sw, "test");
  sw->add_option("--model", o.model, "classifier model")->envname("VRU_MODEL");
  sw->add_option("--kind", o.kind, "start or stop");
  sw->add_option("--out", o.out, "CSV file (default stdout)");
  sw->callback([&] { cmd_sweep(o); });

  auto * tm = app.add_subcommand("time", "per-cycle prediction latency");
  common(tm);
  scenes(tm, "test");
  tm->add_option("--method", o.method, "monolithic, two-stage or physmod")->required();
  tm->add_option("--model", o.model, "predictor model")->envname("VRU_MODEL");
  tm->add_option("--pipeline", o.pipeline, "pipeline manifest")->envname("VRU_PIPELINE");
  tm->add_option("--cycles", o.cycles, "timed cycles");
  tm->add_option("--out", o.out, "JSON file (default stdout)");
  tm->callback([&] { cmd_time(o); });

  auto * cf = app.add_subcommand("config", "print the effective configuration");
  common(cf);
  cf->callback([&] { std::cout << load_config(o).to_text(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const FingerprintMismatch & e) {
    std::cerr << "polymlp: fingerprint mismatch: " << e.what() << '\n';
    return 3;
  } catch (const std::exception & e) {
    std::cerr << "polymlp: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
