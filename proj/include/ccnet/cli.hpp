#pragma once

// Command-line front end. dispatch() is the whole program; tools/ccnet.cpp
// only forwards argv to it.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "ccnet/config.hpp"
#include "ccnet/gradcheck.hpp"
#include "ccnet/plot.hpp"
#include "ccnet/train.hpp"

namespace ccnet {

namespace cli_detail {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string profile;
  std::string task;
  std::vector<std::string> sets;
  bool dry_run = false;
};

inline void add_common(CLI::App& app, CommonFlags& f) {
  app.add_option("--config", f.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--out", f.out, "Output directory (default: $CCNET_OUT/<command>-<task>-<profile>-s<seed>)");
  app.add_option("--profile", f.profile, "Scale profile")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--task", f.task, "Task profile")->check(CLI::IsMember({"dehaze", "deblur", "desnow"}));
  app.add_option("--set", f.sets, "Override a config field: section.key=value (repeatable)");
  app.add_flag("--dry-run", f.dry_run, "Resolve and print the configuration, then exit");
}

inline RunConfig resolve(const CommonFlags& f) {
  Settings file = f.config.empty() ? Settings{} : read_ini_file(f.config);
  Settings over;
  if (!f.profile.empty()) over.emplace_back("run.profile", f.profile);
  if (!f.task.empty()) over.emplace_back("run.task", f.task);
  if (f.seed) over.emplace_back("run.seed", std::to_string(*f.seed));
  if (!f.out.empty()) over.emplace_back("run.out", f.out);
  for (const auto& s : f.sets) over.push_back(parse_assignment(s));
  return resolve_config(file, over);
}

inline std::filesystem::path output_dir(const RunConfig& c, const std::string& command) {
  if (!c.out.empty()) return c.out;
  return std::filesystem::path(default_out_root()) /
         (command + "-" + to_string(c.task) + "-" + to_string(c.profile) + "-s" + std::to_string(c.seed));
}

inline void echo_config(const RunConfig& c, const std::filesystem::path& dir) {
  write_text_file(dir / "config.ini", to_ini(c));
}

inline std::vector<ImagePair> dataset_for(const RunConfig& c) {
  if (!c.data.dataset.empty()) return load_dataset(c.data.dataset);
  return synth_pairs(c.degradation(), c.data.count, mix_seed(c.seed, 0xda7a), c.data.image_size, c.data.randomize);
}

inline std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

struct ReferenceBand {
  double params_m;
  double macs_g;
};

inline std::optional<ReferenceBand> published_complexity(Task t) {
  if (t == Task::dehaze) return ReferenceBand{4.26, 43.51};
  return std::nullopt;
}

inline std::vector<StepRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open metrics log " + path.string());
  std::vector<StepRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      StepRecord r;
      r.iteration = j.at("iteration").get<std::size_t>();
      r.lr = j.at("lr").get<double>();
      r.spatial = j.at("L_s").get<double>();
      r.frequency = j.at("L_f").get<double>();
      r.total = j.at("L").get<double>();
      r.psnr = j.at("psnr").is_null() ? std::numeric_limits<double>::infinity() : j.at("psnr").get<double>();
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cli_detail

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  namespace fs = std::filesystem;

  CLI::App app{"ccnet: context-aware convolutional image restoration"};
  app.require_subcommand(1);

  CommonFlags f;
  std::function<int()> action;

  auto* synth = app.add_subcommand("synth", "Write a synthetic paired dataset (degraded/clean PNG + manifest)");
  add_common(*synth, f);
  synth->callback([&] {
    action = [&] {
      RunConfig c = resolve(f);
      c.validate();
      if (f.dry_run) return out << to_ini(c), 0;
      const fs::path dir = output_dir(c, "synth");
      const auto m = make_dataset(c.data.clean_dir, c.degradation(), dir, c.data.count, c.seed,
                                  c.data.image_size, c.data.randomize);
      echo_config(c, dir);
      out << "wrote " << m.entries.size() << " pairs to " << dir.string() << "\n";
      return 0;
    };
  });

  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write metrics.jsonl, checkpoint/ and eval.json");
  add_common(*train_cmd, f);
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint directory")->check(CLI::ExistingDirectory);
  train_cmd->callback([&] {
    action = [&] {
      RunConfig c = resolve(f);
      c.validate();
      if (f.dry_run) return out << to_ini(c), 0;
      const fs::path dir = output_dir(c, "train");
      fs::create_directories(dir);
      echo_config(c, dir);
      Trainer<float> trainer(build_model<float>(c.model, model_seed(c.train)), c.train, dataset_for(c));
      if (!resume.empty()) {
        trainer.load(resume);
        out << "resumed at iteration " << trainer.iteration() << "\n";
      }
      std::ofstream log(dir / "metrics.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
      const auto t0 = std::chrono::steady_clock::now();
      trainer.run(&log, [&](const StepRecord& r) {
        if (r.iteration % c.train.eval_every == 0 || r.iteration == c.train.iterations) {
          const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          out << "iter " << r.iteration << "  lr " << r.lr << "  L " << fmt(r.total, 5) << "  L_s "
              << fmt(r.spatial, 5) << "  L_f " << fmt(r.frequency, 5) << "  psnr " << fmt(r.psnr, 2) << "  ("
              << fmt(secs, 1) << "s)\n";
        }
      });
      trainer.save(dir / "checkpoint");
      const EvalReport rep = evaluate(trainer.model(), trainer.data());
      write_text_file(dir / "eval.json", nlohmann::json(rep).dump(2) + "\n");
      out << "train PSNR " << fmt(rep.mean_psnr, 3) << " dB  SSIM " << fmt(rep.mean_ssim, 4) << "  -> "
          << dir.string() << "\n";
      return 0;
    };
  });

  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (PSNR/SSIM of the full-resolution head)");
  add_common(*eval_cmd, f);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->callback([&] {
    action = [&] {
      RunConfig c = resolve(f);
      const auto ck = load_checkpoint<float>(checkpoint);
      c.model = ck.model_cfg;
      c.validate();
      if (f.dry_run) return out << to_ini(c), 0;
      Model<float> model = build_model<float>(ck.model_cfg, 0);
      restore_checkpoint(ck, model);
      const EvalReport rep = evaluate(model, dataset_for(c));
      const fs::path dir = output_dir(c, "eval");
      echo_config(c, dir);
      write_text_file(dir / "eval.json", nlohmann::json(rep).dump(2) + "\n");
      out << "PSNR " << fmt(rep.mean_psnr, 3) << " dB  SSIM " << fmt(rep.mean_ssim, 4) << " over "
          << rep.psnr.size() << " pairs\n";
      return 0;
    };
  });

  std::size_t n_seeds = 3;
  auto* ablate = app.add_subcommand("ablate", "Train the six ablation variants and tabulate PSNR/SSIM/params");
  add_common(*ablate, f);
  ablate->add_option("--seeds", n_seeds, "Number of seeds (seed, seed+1, ...)")->check(CLI::PositiveNumber);
  ablate->callback([&] {
    action = [&] {
      RunConfig c = resolve(f);
      c.validate();
      if (f.dry_run) return out << to_ini(c), 0;
      const fs::path dir = output_dir(c, "ablate");
      fs::create_directories(dir);
      echo_config(c, dir);
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < n_seeds; ++i) seeds.push_back(c.seed + i);
      const auto data = dataset_for(c);
      const auto rows = run_ablation<float>(c.model, c.train, data, seeds, ablation_variants(),
                                            [&](const AblationRow& row, std::size_t i) {
                                              out << row.variant.name << " seed " << seeds[i] << ": PSNR "
                                                  << fmt(row.psnr.back(), 3) << "\n";
                                            });
      nlohmann::json j = nlohmann::json::array();
      std::ostringstream table;
      table << "| variant | params | MACs | PSNR | SSIM |\n|---|---|---|---|---|\n";
      std::vector<ScatterPoint> by_params, by_macs;
      for (const auto& r : rows) {
        j.push_back({{"variant", r.variant.name}, {"block", to_string(r.variant.block)}, {"ldim", r.variant.ldim},
                     {"params", r.params}, {"macs", r.macs}, {"psnr", r.psnr}, {"ssim", r.ssim},
                     {"final_loss", r.final_loss}, {"mean_psnr", r.mean_psnr()}, {"mean_ssim", r.mean_ssim()}});
        table << "| " << r.variant.name << " | " << r.params << " | " << r.macs << " | " << fmt(r.mean_psnr(), 3)
              << " | " << fmt(r.mean_ssim(), 4) << " |\n";
        by_params.push_back({r.variant.name, r.params / 1e3, r.mean_psnr()});
        by_macs.push_back({r.variant.name, r.macs / 1e6, r.mean_psnr()});
      }
      write_text_file(dir / "ablation.json", j.dump(2) + "\n");
      write_text_file(dir / "ablation.md", table.str());
      write_text_file(dir / "params_vs_psnr.svg",
                      scatter_svg(by_params, {"Parameters vs. PSNR", "parameters (K)", "PSNR (dB)"}));
      write_text_file(dir / "macs_vs_psnr.svg",
                      scatter_svg(by_macs, {"MACs vs. PSNR", "MACs per patch (M)", "PSNR (dB)"}));
      out << table.str();
      return 0;
    };
  });

  std::string op = "all";
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check of one op (or 'all')");
  add_common(*gc, f);
  gc->add_option("--op", op, "Op id or prefix (e.g. strip_apply), or 'all'");
  gc->callback([&] {
    action = [&] {
      const RunConfig c = resolve(f);
      const auto ops = select_gradcheck_ops(op);
      if (f.dry_run) {
        for (const auto& id : ops) out << id << "\n";
        return 0;
      }
      bool ok = true;
      for (const auto& id : ops) {
        const auto r = grad_check(id, c.seed);
        ok = ok && r.passed;
        out << (r.passed ? "PASS " : "FAIL ") << id << "  max_rel_err " << std::scientific << std::setprecision(3)
            << r.max_relative_error << std::defaultfloat << "  (" << r.checked << " elements)\n";
      }
      return ok ? 0 : 1;
    };
  });

  std::size_t size = 256;
  auto* cx = app.add_subcommand("complexity", "Parameter and MAC counts for the resolved model");
  add_common(*cx, f);
  cx->add_option("--size", size, "Square input size for the MAC count")->check(CLI::PositiveNumber);
  cx->callback([&] {
    action = [&] {
      RunConfig c = resolve(f);
      c.model.validate();
      if (f.dry_run) return out << to_ini(c), 0;
      const auto m = build_model<float>(c.model, c.seed);
      const double params = static_cast<double>(count_parameters(m));
      const double macs = static_cast<double>(count_macs(m, size, size));
      out << "profile " << to_string(c.profile) << ", task " << to_string(c.task) << ", C="
          << c.model.base_channels << ", N=" << c.model.blocks_per_scale << ", block "
          << to_string(c.model.block_type) << (c.model.use_ldim ? " + LDIM" : "") << "\n";
      out << "params " << fmt(params / 1e6, 3) << " M, MACs " << fmt(macs / 1e9, 2) << " G at " << size << "x"
          << size << "\n";
      const auto ref = published_complexity(c.task);
      if (c.profile == Profile::paper && ref && size == 256) {
        const bool p_ok = std::abs(params / 1e6 - ref->params_m) <= 0.15 * ref->params_m;
        const bool m_ok = std::abs(macs / 1e9 - ref->macs_g) <= 0.15 * ref->macs_g;
        out << "reference " << ref->params_m << " M params [" << fmt(0.85 * ref->params_m, 3) << ", "
            << fmt(1.15 * ref->params_m, 3) << "] " << (p_ok ? "inside" : "OUTSIDE") << "; " << ref->macs_g
            << " G MACs [" << fmt(0.85 * ref->macs_g, 2) << ", " << fmt(1.15 * ref->macs_g, 2) << "] "
            << (m_ok ? "inside" : "OUTSIDE") << "\n";
      } else {
        out << "no published reference for this profile/task/size\n";
      }
      return 0;
    };
  });

  std::vector<std::string> logs;
  auto* plot = app.add_subcommand("plot", "SVG charts from metrics logs or an ablation table");
  add_common(*plot, f);
  plot->add_option("inputs", logs, "metrics.jsonl files and/or ablation.json")->required()->check(CLI::ExistingFile);
  plot->callback([&] {
    action = [&] {
      const RunConfig c = resolve(f);
      const fs::path dir = c.out.empty() ? fs::path(default_out_root()) / "plots" : fs::path(c.out);
      if (f.dry_run) return out << "plots -> " << dir.string() << "\n", 0;
      std::vector<LineSeries> loss;
      for (const auto& path : logs) {
        if (fs::path(path).extension() == ".json") {
          std::ifstream is(path);
          const auto j = nlohmann::json::parse(is);
          std::vector<ScatterPoint> by_params, by_macs;
          for (const auto& r : j) {
            by_params.push_back({r.at("variant"), r.at("params").get<double>() / 1e3, r.at("mean_psnr")});
            by_macs.push_back({r.at("variant"), r.at("macs").get<double>() / 1e6, r.at("mean_psnr")});
          }
          write_text_file(dir / "params_vs_psnr.svg",
                          scatter_svg(by_params, {"Parameters vs. PSNR", "parameters (K)", "PSNR (dB)"}));
          write_text_file(dir / "macs_vs_psnr.svg",
                          scatter_svg(by_macs, {"MACs vs. PSNR", "MACs per patch (M)", "PSNR (dB)"}));
          continue;
        }
        LineSeries s;
        s.label = fs::path(path).parent_path().filename().string();
        for (const auto& r : read_metrics(path)) {
          s.x.push_back(static_cast<double>(r.iteration));
          s.y.push_back(r.total);
        }
        loss.push_back(std::move(s));
      }
      if (!loss.empty()) {
        write_text_file(dir / "loss.svg", line_svg(loss, {"Training loss", "iteration", "L (log scale)", true}));
      }
      out << "plots written to " << dir.string() << "\n";
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << "\n";
    return 2;
  }
  try {
    return action ? action() : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ccnet
