#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "unode/cli/config.hpp"
#include "unode/network/checkpoint.hpp"
#include "unode/theory/gaussian.hpp"

namespace unode::cli {

namespace fs = std::filesystem;

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) fail_data("write failed for '" + path.string() + "'");
}

/// Creates the output directory and records the resolved config in it.
inline fs::path prepare_out(const Config& c) {
  const fs::path dir = c.str("out_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_data("cannot create output dir '" + dir.string() + "': " + ec.message());
  write_text(dir / "config.resolved", c.resolved());
  return dir;
}

/// Inlier training images for the configured class; model input dims follow the data.
struct InlierSetup {
  DataSplit data;
  std::uint32_t inlier = 0;
  std::vector<ImageSample> train;
  PipelineConfig pipeline;
};

inline InlierSetup inlier_setup(const Config& c) {
  InlierSetup s;
  s.data = load_data(c);
  s.inlier = parse_class_id(c.str("inlier_class"));
  s.train = with_label(s.data.train, s.inlier, true);
  if (s.train.empty()) fail_data("no training images for inlier class " + c.str("inlier_class"));
  s.pipeline = pipeline_from_config(c);
  s.pipeline.model.channels = s.train.front().channels;
  s.pipeline.model.height = s.train.front().height;
  s.pipeline.model.width = s.train.front().width;
  s.pipeline.train.stop_epoch = c.u32("stop_epoch");
  return s;
}

inline fs::path checkpoint_path(const Config& c, const fs::path& out) {
  return c.str("checkpoint").empty() ? out / "checkpoint.bin" : fs::path(c.str("checkpoint"));
}

inline int cmd_augweights(const Config& c) {
  const auto out = prepare_out(c);
  const auto s = inlier_setup(c);
  const auto table = pipeline_weights(s.train, s.pipeline);
  write_text(out / "weights.csv", weight_table_csv(table));
  const auto report = weight_table_report(table);
  write_text(out / "weights.txt", report);
  std::cout << report;
  return 0;
}

inline int cmd_train(const Config& c) {
  const auto out = prepare_out(c);
  const auto s = inlier_setup(c);
  const auto ckpt = checkpoint_path(c, out);

  TrainedPipeline p;
  p.table = pipeline_weights(s.train, s.pipeline);
  write_text(out / "weights.csv", weight_table_csv(p.table));
  p.model = init_model(s.pipeline);
  OptimState<float> optim(s.pipeline.optim);
  std::uint64_t start = 0;
  if (c.flag("resume")) {
    if (!fs::exists(ckpt)) fail_data("resume: checkpoint '" + ckpt.string() + "' not found");
    start = load_model(p.model, ckpt.string(), &optim);
    std::cerr << "resuming at step " << start << "\n";
  }
  TrainConfig tc = s.pipeline.train;
  tc.seed = s.pipeline.seed;
  p.logs = train_model(p.model, optim, s.train, p.table, tc, start);
  const std::uint64_t step = p.logs.empty() ? start : p.logs.back().step + 1;
  save_model(p.model, ckpt.string(), step, &optim);
  write_text(out / "loss.csv", loss_log_csv(p.logs));

  finalize_pipeline(p, s.train);
  save_embeddings({static_cast<std::uint32_t>(p.bank.n), static_cast<std::uint32_t>(p.bank.d), p.bank.embeddings},
                  (out / "bank.emb").string());
  write_text(out / "calibration.txt", "mean_bin = " + format_double(p.calibration.mean_bin) + "\nmean_norm = " +
                                          format_double(p.calibration.mean_norm) + "\nlambda_score = " +
                                          format_double(p.calibration.lambda_score) + "\n");
  if (!p.logs.empty()) {
    std::cout << "trained steps " << p.logs.front().step << ".." << p.logs.back().step << ": loss "
              << format_double(p.logs.front().loss.total) << " -> " << format_double(p.logs.back().loss.total) << "\n";
  }
  std::cout << "checkpoint " << ckpt.string() << " (step " << step << ")\n";
  return 0;
}

/// Restores a trained model for the inlier class and rebuilds its bank and calibration.
inline TrainedPipeline load_trained(const Config& c, const InlierSetup& s, const fs::path& out) {
  const auto ckpt = checkpoint_path(c, out);
  if (!fs::exists(ckpt)) fail_data("checkpoint '" + ckpt.string() + "' not found (run 'train' first)");
  TrainedPipeline p;
  p.model = init_model(s.pipeline);
  load_model(p.model, ckpt.string());
  finalize_pipeline(p, s.train);
  return p;
}

inline int cmd_score(const Config& c) {
  const auto out = prepare_out(c);
  const auto s = inlier_setup(c);
  const auto p = load_trained(c, s, out);
  const auto rows = score_images(p, s.data.test);
  write_text(out / "scores.csv", scores_csv(rows, s.data.test));
  const auto test_in = with_label(s.data.test, s.inlier, true);
  const auto test_out = with_label(s.data.test, s.inlier, false);
  if (!test_in.empty() && !test_out.empty()) {
    const auto a = component_auroc(score_images(p, test_in), score_images(p, test_out));
    std::cout << "AUROC combined " << format_double(a.combined) << "  sim " << format_double(a.sim) << "  bin "
              << format_double(a.bin) << "\n";
  }
  return 0;
}

inline std::vector<std::uint32_t> eval_classes(const Config& c, const DataSplit& d) {
  std::vector<std::uint32_t> ids;
  for (const auto& name : c.list("eval_classes")) ids.push_back(parse_class_id(name));
  return ids.empty() ? d.class_ids : ids;
}

inline void emit_report(const fs::path& out, const std::string& stem, const EvalReport& r) {
  write_text(out / (stem + ".csv"), report_csv(r));
  const auto table = report_table(r);
  write_text(out / (stem + ".txt"), table);
  std::cout << table;
}

/// With a checkpoint configured, evaluates that model on its inlier class; otherwise trains
/// and evaluates one model per class.
inline int cmd_eval_oneclass(const Config& c) {
  const auto out = prepare_out(c);
  const auto s = inlier_setup(c);
  EvalReport rep;
  if (!c.str("checkpoint").empty()) {
    const auto p = load_trained(c, s, out);
    rep.protocol = "one-class";
    const auto a = component_auroc(score_images(p, with_label(s.data.test, s.inlier, true)),
                                   score_images(p, with_label(s.data.test, s.inlier, false)));
    rep.add(class_name(c, s.inlier), a.combined);
  } else {
    const auto ids = eval_classes(c, s.data);
    std::vector<std::string> names;
    for (auto id : ids) names.push_back(class_name(c, id));
    rep = oneclass_protocol(s.data.train, s.data.test, ids, s.pipeline, names);
  }
  emit_report(out, "eval_oneclass", rep);
  return 0;
}

inline int cmd_eval_corrupt(const Config& c) {
  const auto out = prepare_out(c);
  const auto s = inlier_setup(c);
  const auto corruptions = parse_corruptions(c);
  if (corruptions.empty()) fail_usage("corruptions list is empty");
  GridReport g;
  if (!c.str("checkpoint").empty()) {
    const auto p = load_trained(c, s, out);
    for (const auto& k : corruptions) g.corruptions.push_back(k.tag());
    g.classes.push_back(class_name(c, s.inlier));
    g.auroc.push_back(corrupted_eval(p, s.data.test, s.inlier, corruptions, s.pipeline.seed));
  } else {
    const auto ids = eval_classes(c, s.data);
    std::vector<std::string> names;
    for (auto id : ids) names.push_back(class_name(c, id));
    g = corrupted_protocol(s.data.train, s.data.test, ids, corruptions, s.pipeline, names);
  }
  write_text(out / "eval_corrupt.csv", grid_csv(g));
  const auto table = grid_table(g);
  write_text(out / "eval_corrupt.txt", table);
  std::cout << table;
  return 0;
}

/// Inliers are every configured class; each entry of out_classes is a separate external set.
inline int cmd_eval_multiclass(const Config& c) {
  const auto out = prepare_out(c);
  const auto data = load_data(c);
  auto pipeline = pipeline_from_config(c);
  pipeline.model.channels = data.train.front().channels;
  pipeline.model.height = data.train.front().height;
  pipeline.model.width = data.train.front().width;
  const auto mode_name = c.str("multiclass_mode");
  if (mode_name != "unlabeled" && mode_name != "labeled") fail_usage("multiclass_mode must be unlabeled or labeled");
  const auto mode = mode_name == "labeled" ? MulticlassMode::Labeled : MulticlassMode::Unlabeled;

  std::vector<NamedSet> sets;
  for (const auto& name : c.list("out_classes")) {
    SynthSpec spec;
    spec.classes = {parse_synth_class(name)};
    spec.channels = pipeline.model.channels;
    spec.height = pipeline.model.height;
    spec.width = pipeline.model.width;
    spec.n_per_class = c.u32("n_test");
    spec.seed = Rng(c.u64("seed")).fork(0x4F5554ull).next_u64();
    sets.push_back({name, gen_synth(spec)});
  }
  if (sets.empty()) fail_usage("out_classes is empty");
  const auto rep = multiclass_eval(data.train, data.test, sets, mode, pipeline);
  emit_report(out, "eval_multiclass", rep);
  return 0;
}

/// Sweep over d plus the random-setup agreement suite; exit 3 if any Monte Carlo point misses its CI.
inline int cmd_theory(const Config& c) {
  const auto out = prepare_out(c);
  const Rng root(c.u64("seed"), 0x54484552ull);
  const auto n = c.u64("theory_samples");
  const auto rows = sweep_d(c.f64("theory_a_norm"), c.f64("theory_eps"), parse_doubles(c, "theory_d_grid"), n, root.fork(0));
  write_text(out / "theory_sweep.csv", sweep_csv(rows));

  std::string suite = "setup,dim,a_norm,a_prime_norm,eps,analytic,mc,ci,agrees\n";
  std::size_t misses = 0;
  for (const auto& r : rows) misses += r.report.agrees() ? 0 : 1;
  Rng setup_rng = root.fork(1);
  for (std::uint64_t k = 0; k < c.u64("theory_setups"); ++k) {
    const auto setup = random_setup(setup_rng);
    const auto rep = mc_adv_error(setup, n, root.fork(2).fork(k));
    misses += rep.agrees() ? 0 : 1;
    suite += std::to_string(k) + "," + std::to_string(setup.a.size()) + "," +
             format_double(std::sqrt(detail::dot(setup.a, setup.a))) + "," +
             format_double(std::sqrt(detail::dot(setup.a_prime, setup.a_prime))) + "," + format_double(setup.eps) + "," +
             format_double(rep.analytic) + "," + format_double(rep.mc_estimate) + "," + format_double(rep.ci_halfwidth) +
             "," + (rep.agrees() ? "1" : "0") + "\n";
  }
  write_text(out / "theory_setups.csv", suite);
  std::cout << sweep_csv(rows);
  if (misses) fail_numeric(std::to_string(misses) + " Monte Carlo estimate(s) fell outside their 3-sigma interval");
  std::cout << "all Monte Carlo estimates within their 3-sigma intervals\n";
  return 0;
}

}  // namespace unode::cli
