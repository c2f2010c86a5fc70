#include "lvg/cli.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

#include "lvg/bounds.hpp"
#include "lvg/common.hpp"
#include "lvg/evalsuite.hpp"
#include "lvg/image_io.hpp"
#include "lvg/latent.hpp"
#include "lvg/losses.hpp"
#include "lvg/replay.hpp"

namespace lvg::cli {

using json = nlohmann::json;

namespace {

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void atomic_write(const std::filesystem::path& file, const std::string& text) {
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream f(tmp);
        TORCH_CHECK(f.good(), "cannot write ", tmp.string());
        f << text;
    }
    std::filesystem::rename(tmp, file);
}

json config_to_json(const RunConfig& cfg) {
    json j;
    j["mode"] = trainer::mode_to_string(cfg.train.mode);
    j["lr"] = cfg.train.lr;
    j["adam_beta1"] = cfg.train.adam_beta1;
    j["adam_beta2"] = cfg.train.adam_beta2;
    j["epochs"] = cfg.train.epochs;
    j["batch_size"] = cfg.train.batch_size;
    j["n_labelled"] = cfg.train.n_labelled;
    j["replay_fraction"] = cfg.train.replay_fraction;
    j["seed"] = cfg.train.seed;
    j["threads"] = cfg.train.threads;
    j["weights"] = {{"lambda_gp", cfg.train.weights.lambda_gp},
                    {"beta", cfg.train.weights.beta},
                    {"gamma", cfg.train.weights.gamma},
                    {"disentangle", cfg.train.weights.disentangle},
                    {"capacity_start", cfg.train.weights.capacity_start},
                    {"capacity_end", cfg.train.weights.capacity_end},
                    {"n_critic", cfg.train.weights.n_critic}};
    j["arch"] = {{"image_h", cfg.arch.image_h},
                 {"image_w", cfg.arch.image_w},
                 {"image_c", cfg.arch.image_c},
                 {"dim_z", cfg.arch.dim_z},
                 {"num_classes", cfg.arch.num_classes},
                 {"kind", cfg.arch.kind},
                 {"activation", cfg.arch.activation},
                 {"gen_widths", cfg.arch.gen_widths},
                 {"critic_widths", cfg.arch.critic_widths},
                 {"enc_widths", cfg.arch.enc_widths},
                 {"task_widths", cfg.arch.task_widths},
                 {"cls_widths", cfg.arch.cls_widths}};
    j["data"] = {{"target_h", cfg.data.target_h},
                 {"target_w", cfg.data.target_w},
                 {"synth_train", cfg.data.synth_train},
                 {"synth_test", cfg.data.synth_test},
                 {"synth_seed", cfg.data.synth_seed},
                 {"data_root", cfg.data.data_root}};
    j["tasks"] = cfg.tasks;
    j["run_dir"] = cfg.run_dir;
    j["run_id"] = cfg.run_id;
    j["track_bounds"] = cfg.track_bounds;
    j["bounds_sample_n"] = cfg.bounds_sample_n;
    j["eval_samples"] = cfg.eval_samples;
    j["temperature"] = 0.67;
    return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    if (j.contains("mode")) cfg.train.mode = trainer::mode_from_string(j.at("mode"));
    maybe(j, "lr", cfg.train.lr);
    maybe(j, "adam_beta1", cfg.train.adam_beta1);
    maybe(j, "adam_beta2", cfg.train.adam_beta2);
    maybe(j, "epochs", cfg.train.epochs);
    maybe(j, "batch_size", cfg.train.batch_size);
    maybe(j, "n_labelled", cfg.train.n_labelled);
    maybe(j, "replay_fraction", cfg.train.replay_fraction);
    maybe(j, "seed", cfg.train.seed);
    maybe(j, "threads", cfg.train.threads);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        maybe(w, "lambda_gp", cfg.train.weights.lambda_gp);
        maybe(w, "beta", cfg.train.weights.beta);
        maybe(w, "gamma", cfg.train.weights.gamma);
        maybe(w, "disentangle", cfg.train.weights.disentangle);
        maybe(w, "capacity_start", cfg.train.weights.capacity_start);
        maybe(w, "capacity_end", cfg.train.weights.capacity_end);
        maybe(w, "n_critic", cfg.train.weights.n_critic);
    }
    if (j.contains("arch")) {
        const auto& a = j.at("arch");
        maybe(a, "image_h", cfg.arch.image_h);
        maybe(a, "image_w", cfg.arch.image_w);
        maybe(a, "image_c", cfg.arch.image_c);
        maybe(a, "dim_z", cfg.arch.dim_z);
        maybe(a, "num_classes", cfg.arch.num_classes);
        maybe(a, "kind", cfg.arch.kind);
        maybe(a, "activation", cfg.arch.activation);
        maybe(a, "gen_widths", cfg.arch.gen_widths);
        maybe(a, "critic_widths", cfg.arch.critic_widths);
        maybe(a, "enc_widths", cfg.arch.enc_widths);
        maybe(a, "task_widths", cfg.arch.task_widths);
        maybe(a, "cls_widths", cfg.arch.cls_widths);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        maybe(d, "target_h", cfg.data.target_h);
        maybe(d, "target_w", cfg.data.target_w);
        maybe(d, "synth_train", cfg.data.synth_train);
        maybe(d, "synth_test", cfg.data.synth_test);
        maybe(d, "synth_seed", cfg.data.synth_seed);
        maybe(d, "data_root", cfg.data.data_root);
    }
    maybe(j, "tasks", cfg.tasks);
    maybe(j, "run_dir", cfg.run_dir);
    maybe(j, "run_id", cfg.run_id);
    maybe(j, "track_bounds", cfg.track_bounds);
    maybe(j, "bounds_sample_n", cfg.bounds_sample_n);
    maybe(j, "eval_samples", cfg.eval_samples);
    return cfg;
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream f(file);
    TORCH_CHECK(f.good(), "config_not_found: ", file.string());
    return config_from_json(json::parse(f));
}

std::string config_to_json_string(const RunConfig& cfg) { return config_to_json(cfg).dump(2); }

RunConfig config_from_json_string(const std::string& text) {
    return config_from_json(json::parse(text));
}

RunPaths RunPaths::at(const std::filesystem::path& root) {
    RunPaths p;
    p.root = root;
    p.manifest = root / "manifest.json";
    p.metrics_csv = root / "metrics.csv";
    p.bounds_csv = root / "bounds.csv";
    p.eval_dir = root / "eval";
    p.checkpoints = root / "checkpoints";
    p.snapshots = root / "snapshots";
    return p;
}

void RunPaths::create() const {
    std::filesystem::create_directories(root);
    std::filesystem::create_directories(eval_dir);
    std::filesystem::create_directories(checkpoints);
    std::filesystem::create_directories(snapshots);
}

void write_manifest_start(const RunPaths& paths, const RunConfig& cfg) {
    json m;
    m["version"] = kVersion;
    m["status"] = "running";
    m["started"] = timestamp();
    m["config"] = config_to_json(cfg);
    m["tasks"] = cfg.tasks;
    m["seeds"] = {{"master", cfg.train.seed},
                  {"model", mix_seed(cfg.train.seed, 0x1)},
                  {"data", cfg.data.synth_seed}};
    atomic_write(paths.manifest, m.dump(2) + "\n");
}

void finalize_manifest(const RunPaths& paths, const std::string& status,
                       const std::vector<std::string>& artifacts) {
    std::ifstream f(paths.manifest);
    TORCH_CHECK(f.good(), "manifest missing at finalize: ", paths.manifest.string());
    json m = json::parse(f);
    f.close();
    m["status"] = status;
    m["finished"] = timestamp();
    m["artifacts"] = artifacts;
    atomic_write(paths.manifest, m.dump(2) + "\n");
}

void write_error_record(const std::filesystem::path& dir, const std::string& code,
                        const std::string& message) {
    json e;
    e["error"] = code;
    e["message"] = message;
    e["time"] = timestamp();
    std::cerr << e.dump() << "\n";
    if (!dir.empty() && std::filesystem::exists(dir))
        atomic_write(dir / "error.json", e.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

nets::ArchitectureSpec arch_for_mode(const RunConfig& cfg) {
    auto arch = cfg.arch;
    arch.image_h = cfg.data.target_h;
    arch.image_w = cfg.data.target_w;
    arch.num_domains = 1;
    arch.class_conditional = cfg.train.mode != trainer::Mode::kUnsupervised;
    return arch;
}

// Live-generator source for the bounds tracker: domain-0 samples with their
// class codes as labels.
bounds::LabelledSource live_domain0_source(const trainer::TrainState* state) {
    return [state](int64_t n, uint64_t seed) {
        torch::NoGradGuard ng;
        const auto& prior = state->prior;
        auto z = latent::sample_continuous_prior(n, prior, mix_seed(seed, 1));
        std::vector<double> cp = prior.class_probs;
        if (cp.empty()) cp.assign(prior.num_classes, 1.0 / double(prior.num_classes));
        auto c = latent::sample_categorical_prior(n, cp, mix_seed(seed, 2));
        auto a = torch::zeros({n, prior.num_domains}, torch::kFloat32);
        a.index_put_({torch::indexing::Slice(), 0}, 1.0);
        auto gen = state->bundle.generator;
        auto x = nets::generate(gen, z, a, c);
        return std::make_pair(x, c.argmax(1));
    };
}

}  // namespace

int cmd_train(const RunConfig& cfg) {
    auto paths = RunPaths::at(cfg.run_dir);
    try {
        cfg.train.validate();
        paths.create();
        write_manifest_start(paths, cfg);
        at::set_num_threads(static_cast<int>(cfg.train.threads));

        auto stream = data::make_stream(cfg.tasks, cfg.data);
        auto arch = arch_for_mode(cfg);

        CsvWriter metrics(paths.metrics_csv,
                          [] {
                              std::vector<std::string> h = {"step", "task", "epoch"};
                              for (auto& k : losses::LossReport::keys()) h.push_back(k);
                              return h;
                          }());
        evalsuite::MetricsLog eval_log;
        std::vector<std::string> artifacts = {"metrics.csv", "manifest.json"};

        // bounds tracking needs labels (the probe is supervised)
        const bool track = cfg.track_bounds && cfg.train.mode != trainer::Mode::kUnsupervised;
        std::unique_ptr<bounds::RiskTracker> tracker;
        trainer::TrainState* state_ptr = nullptr;

        trainer::SequenceHooks hooks;
        hooks.on_step = [&](const trainer::TrainState& st, int64_t task, int64_t epoch,
                            const losses::LossReport& rep) {
            std::vector<std::string> row = {std::to_string(st.step), std::to_string(task),
                                            std::to_string(epoch)};
            for (auto& k : losses::LossReport::keys()) row.push_back(fmt_double(rep.at(k)));
            metrics.write_row(row);
        };
        hooks.on_epoch = [&](const trainer::TrainState& st, int64_t task, int64_t epoch) {
            const int64_t global_epoch = (task - 1) * cfg.train.epochs + epoch;
            auto& bundle = const_cast<trainer::TrainState&>(st).bundle;
            if (cfg.train.mode != trainer::Mode::kUnsupervised) {
                for (size_t j = 0; j < stream.tasks.size(); ++j) {
                    const double acc =
                        evalsuite::classifier_accuracy(bundle, stream.tasks[j].test);
                    eval_log.append({cfg.run_id, task, global_epoch,
                                     "acc_" + stream.tasks[j].name, acc, cfg.train.seed});
                }
            }
            if (tracker) tracker->on_epoch(global_epoch);
        };
        hooks.on_task_end = [&](const trainer::TrainState& st, int64_t task) {
            auto dir = paths.checkpoints / ("task_" + std::to_string(task));
            nets::save_bundle(st.bundle, dir);
            artifacts.push_back("checkpoints/task_" + std::to_string(task));
            if (st.snapshot) {
                auto sdir =
                    paths.snapshots / ("task_" + std::to_string(st.snapshot->task_count));
                if (!std::filesystem::exists(sdir / "snapshot.json")) {
                    replay::save_snapshot(*st.snapshot, sdir);
                    artifacts.push_back("snapshots/task_" +
                                        std::to_string(st.snapshot->task_count));
                }
            }
        };

        // run_sequence with a tracker that watches the live generator
        auto state = trainer::make_initial_state(arch, cfg.train);
        state_ptr = &state;
        if (track) {
            bounds::RiskTrackerConfig tc;
            tc.sample_n = cfg.bounds_sample_n;
            tc.seed = mix_seed(cfg.train.seed, 0xb0);
            tracker = std::make_unique<bounds::RiskTracker>(
                live_domain0_source(state_ptr), stream.tasks.front().test,
                arch.num_classes, tc);
        }
        for (size_t i = 0; i < stream.tasks.size(); ++i) {
            const int64_t t = static_cast<int64_t>(i) + 1;
            if (t >= 2) {
                state.snapshot = replay::build_snapshot(state.bundle, state.prior, t - 1);
                latent::expand_domain(state.prior, state.bundle,
                                      mix_seed(cfg.train.seed, 0xe0 + t));
            }
            trainer::train_task(state, stream.tasks[i], cfg.train, hooks);
            hooks.on_task_end(state, t);
        }

        // final snapshot covering the whole sequence, for eval / replay-sample
        auto final_snap = replay::build_snapshot(state.bundle, state.prior,
                                                 static_cast<int64_t>(stream.tasks.size()));
        auto final_dir = paths.snapshots / ("task_" + std::to_string(final_snap.task_count));
        replay::save_snapshot(final_snap, final_dir);
        artifacts.push_back("snapshots/task_" + std::to_string(final_snap.task_count));

        eval_log.write_csv(paths.eval_dir / "metrics.csv");
        artifacts.push_back("eval/metrics.csv");
        if (cfg.train.mode != trainer::Mode::kUnsupervised) {
            auto curve = evalsuite::forgetting_curve(eval_log);
            evalsuite::write_forgetting_csv(curve, paths.eval_dir / "forgetting.csv");
            artifacts.push_back("eval/forgetting.csv");
        }
        if (tracker) {
            tracker->write_csv(paths.bounds_csv);
            artifacts.push_back("bounds.csv");
        }
        finalize_manifest(paths, "completed", artifacts);
        return 0;
    } catch (const trainer::NonFiniteLossError& e) {
        write_error_record(paths.root, "non_finite_loss", e.what());
        if (std::filesystem::exists(paths.manifest)) finalize_manifest(paths, "aborted", {});
        return 2;
    } catch (const std::exception& e) {
        write_error_record(paths.root, "train_failed", e.what());
        return 1;
    }
}

// ---------------------------------------------------------------------------
// eval and strips
// ---------------------------------------------------------------------------

namespace {
int with_checkpoint(const std::filesystem::path& ckpt,
                    const std::function<int(nets::ModelBundle&)>& body) {
    if (!std::filesystem::exists(ckpt / "manifest.json")) {
        write_error_record("", "checkpoint_not_found", ckpt.string());
        return 1;
    }
    try {
        auto bundle = nets::load_bundle(ckpt);
        return body(bundle);
    } catch (const std::exception& e) {
        write_error_record("", "eval_failed", e.what());
        return 1;
    }
}
}  // namespace

int cmd_eval(const std::filesystem::path& ckpt, const RunConfig& cfg) {
    return with_checkpoint(ckpt, [&](nets::ModelBundle& bundle) {
        auto stream = data::make_stream(cfg.tasks, cfg.data);
        auto out_dir = ckpt.parent_path().parent_path() / "eval";
        std::filesystem::create_directories(out_dir);
        evalsuite::MetricsLog log;
        const uint64_t seed = cfg.train.seed;

        std::vector<data::Dataset> tests;
        for (auto& t : stream.tasks) tests.push_back(t.test);

        for (size_t j = 0; j < stream.tasks.size(); ++j) {
            const auto& task = stream.tasks[j];
            auto recon = evalsuite::reconstruction_error(bundle, task.test);
            log.append({cfg.run_id, (int64_t)j + 1, 0, "rec_" + task.name, recon.rec, seed});
            log.append({cfg.run_id, (int64_t)j + 1, 0, "mse_" + task.name, recon.mse, seed});
            if (cfg.train.mode != trainer::Mode::kUnsupervised) {
                log.append({cfg.run_id, (int64_t)j + 1, 0, "acc_" + task.name,
                            evalsuite::classifier_accuracy(bundle, task.test), seed});
            }
            auto grid = image_io::tile_grid(
                torch::cat({task.test.images.slice(0, 0, 8),
                            evalsuite::reconstruct(bundle, task.test.images.slice(0, 0, 8))},
                           0),
                8);
            image_io::write_png(out_dir / ("recon_" + task.name + ".png"), grid);
        }
        auto task_acc = evalsuite::task_inference_accuracy(bundle, tests);
        log.append({cfg.run_id, 0, 0, "task_inference_acc", task_acc.overall, seed});

        // replay metrics need the final stored snapshot
        auto snap_root = ckpt.parent_path().parent_path() / "snapshots";
        std::filesystem::path latest;
        for (int64_t t = static_cast<int64_t>(stream.tasks.size()); t >= 1; --t) {
            auto cand = snap_root / ("task_" + std::to_string(t));
            if (std::filesystem::exists(cand / "snapshot.json")) {
                latest = cand;
                break;
            }
        }
        if (!latest.empty() && cfg.train.mode != trainer::Mode::kUnsupervised) {
            auto snap = replay::load_snapshot(latest);
            auto acc = evalsuite::replay_classifier_accuracy(snap, tests, cfg.eval_samples,
                                                             mix_seed(seed, 0x77));
            for (size_t j = 0; j < stream.tasks.size(); ++j)
                log.append({cfg.run_id, (int64_t)j + 1, 0,
                            "replay_acc_" + stream.tasks[j].name, acc.per_task[j], seed});
            auto draw = replay::sample_replay(snap, std::min<int64_t>(cfg.eval_samples, 512),
                                              mix_seed(seed, 0x78));
            bounds::ProbeSpec probe_spec;
            probe_spec.seed = mix_seed(seed, 0x79);
            auto probe = bounds::train_probe(stream.tasks[0].train.images.slice(0, 0, 2000),
                                             stream.tasks[0].train.labels.slice(0, 0, 2000),
                                             bundle.arch.num_classes, probe_spec);
            const double fid = evalsuite::fid_proxy(
                probe, stream.tasks[0].test.images.slice(0, 0, 512), draw.x,
                mix_seed(seed, 0x7a));
            log.append({cfg.run_id, 0, 0, "fid_proxy", fid, seed});
        }
        log.write_csv(out_dir / "metrics.csv");
        std::cout << "eval metrics written to " << (out_dir / "metrics.csv") << "\n";
        return 0;
    });
}

int cmd_interpolate(const std::filesystem::path& ckpt, const RunConfig& cfg,
                    const std::string& task, int64_t index_a, int64_t index_b, int64_t steps) {
    return with_checkpoint(ckpt, [&](nets::ModelBundle& bundle) {
        auto local = cfg.data;
        auto [train, test] = data::load_task(task, local);
        TORCH_CHECK(index_a < test.size() && index_b < test.size(),
                    "sample index out of range");
        auto strip = evalsuite::interpolate(bundle, test.images[index_a], test.images[index_b],
                                            steps);
        auto out_dir = ckpt.parent_path().parent_path() / "eval";
        std::filesystem::create_directories(out_dir);
        auto file = out_dir / ("interp_" + std::to_string(index_a) + "_" +
                               std::to_string(index_b) + ".png");
        image_io::write_png(file, image_io::tile_grid(strip, steps));
        std::cout << file.string() << "\n";
        return 0;
    });
}

int cmd_traverse(const std::filesystem::path& ckpt, const RunConfig& cfg,
                 const std::string& task, int64_t sample_index, int64_t dim, double lo, double hi,
                 int64_t steps) {
    return with_checkpoint(ckpt, [&](nets::ModelBundle& bundle) {
        auto [train, test] = data::load_task(task, cfg.data);
        TORCH_CHECK(sample_index < test.size(), "sample index out of range");
        auto strip = evalsuite::traverse(bundle, test.images[sample_index], dim, lo, hi, steps);
        auto out_dir = ckpt.parent_path().parent_path() / "eval";
        std::filesystem::create_directories(out_dir);
        auto file = out_dir / ("traverse_dim" + std::to_string(dim) + ".png");
        image_io::write_png(file, image_io::tile_grid(strip, steps));
        std::cout << file.string() << "\n";
        return 0;
    });
}

int cmd_replay_sample(const std::filesystem::path& snapshot_dir, int64_t n, uint64_t seed,
                      const std::filesystem::path& out_dir) {
    if (!std::filesystem::exists(snapshot_dir / "snapshot.json")) {
        write_error_record("", "snapshot_not_found", snapshot_dir.string());
        return 1;
    }
    try {
        auto snap = replay::load_snapshot(snapshot_dir);
        auto draw = replay::sample_replay(snap, n, seed);
        std::filesystem::create_directories(out_dir);
        image_io::write_png(out_dir / "replay_grid.png",
                            image_io::tile_grid(draw.x, std::min<int64_t>(n, 10)));
        CsvWriter csv(out_dir / "replay_codes.csv", {"index", "domain", "class"});
        auto dom = draw.codes.a.argmax(1);
        for (int64_t i = 0; i < n; ++i) {
            const int64_t cls =
                draw.codes.c.defined() ? draw.codes.c[i].argmax().item<int64_t>() : -1;
            csv.write_row({std::to_string(i), std::to_string(dom[i].item<int64_t>()),
                           std::to_string(cls)});
        }
        std::cout << (out_dir / "replay_grid.png").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        write_error_record("", "replay_sample_failed", e.what());
        return 1;
    }
}

// ---------------------------------------------------------------------------
// bounds probes over stored snapshots
// ---------------------------------------------------------------------------

int cmd_bounds(const std::filesystem::path& run_dir, const RunConfig& cfg) {
    try {
        auto paths = RunPaths::at(run_dir);
        auto stream = data::make_stream(cfg.tasks, cfg.data);
        std::vector<bounds::BoundReport> reports;
        json out;
        out["per_snapshot"] = json::array();
        for (int64_t t = 1; t <= static_cast<int64_t>(stream.tasks.size()); ++t) {
            auto sdir = paths.snapshots / ("task_" + std::to_string(t));
            if (!std::filesystem::exists(sdir / "snapshot.json")) continue;
            auto snap = replay::load_snapshot(sdir);
            auto draw = replay::sample_replay(snap, cfg.bounds_sample_n,
                                              mix_seed(cfg.train.seed, 0xb000 + t));
            auto labels = replay::pseudo_label(draw.codes).argmax(1);
            bounds::ProbeSpec spec;
            spec.seed = mix_seed(cfg.train.seed, 0xb100 + t);
            auto probe =
                bounds::train_probe(draw.x, labels, snap.generator->arch.num_classes, spec);
            auto h = probe.fn();
            // risks against the first task: the quantity tracked across training
            const auto& test = stream.tasks.front().test;
            auto real_cloud = bounds::SampleCloud::from_images(test.images, test.labels, "real");
            auto eval_draw = replay::sample_replay(snap, cfg.bounds_sample_n,
                                                   mix_seed(cfg.train.seed, 0xb200 + t));
            auto gen_cloud = bounds::SampleCloud::from_images(
                eval_draw.x, replay::pseudo_label(eval_draw.codes).argmax(1), "generated");
            const double risk1 = bounds::empirical_risk(h, real_cloud);
            const double risk2 = bounds::empirical_risk(h, gen_cloud);
            auto w = bounds::wasserstein_distance(real_cloud, gen_cloud, 1,
                                                  mix_seed(cfg.train.seed, 0xb300 + t));
            const double d = bounds::estimate_combined_error(
                test.images, test.labels, eval_draw.x,
                replay::pseudo_label(eval_draw.codes).argmax(1),
                snap.generator->arch.num_classes, mix_seed(cfg.train.seed, 0xb400 + t));
            auto rep = bounds::theorem2_report(risk1, risk2, w.value, real_cloud.size(),
                                               gen_cloud.size(), 0.05, 1.0, d);
            reports.push_back(rep);
            out["per_snapshot"].push_back({{"snapshot_task", t},
                                           {"risk_real", rep.risk_real},
                                           {"risk_generated", rep.risk_generated},
                                           {"w_distance", rep.w_distance},
                                           {"w_estimator", w.estimator},
                                           {"combined_error", rep.combined_error},
                                           {"rhs", rep.rhs},
                                           {"holds", rep.holds}});
        }
        if (reports.empty()) {
            write_error_record(run_dir, "no_snapshots", run_dir.string());
            return 1;
        }
        auto agg = bounds::lemma2_accumulated(reports);
        out["lemma2"] = {{"lhs", agg.risk_real}, {"rhs", agg.rhs}, {"holds", agg.holds}};
        atomic_write(paths.root / "bounds_probe.json", out.dump(2) + "\n");
        std::cout << (paths.root / "bounds_probe.json").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        write_error_record(run_dir, "bounds_failed", e.what());
        return 1;
    }
}

// ---------------------------------------------------------------------------
// data import
// ---------------------------------------------------------------------------

int cmd_import_data(const std::string& source, const std::filesystem::path& out_dir,
                    const std::vector<std::string>& idx_files, int64_t n_train, int64_t n_test,
                    uint64_t seed) {
    try {
        data::Dataset train, test;
        if (source == "idx") {
            TORCH_CHECK(idx_files.size() == 4,
                        "idx import needs train-images, train-labels, test-images, test-labels");
            train = data::import_idx(idx_files[0], idx_files[1]);
            test = data::import_idx(idx_files[2], idx_files[3]);
        } else if (source == "synth-digits") {
            train = data::make_synth_digits(n_train, mix_seed(seed, 0x11));
            test = data::make_synth_digits(n_test, mix_seed(seed, 0x22));
        } else if (source == "synth-fashion") {
            train = data::make_synth_fashion(n_train, mix_seed(seed, 0x33));
            test = data::make_synth_fashion(n_test, mix_seed(seed, 0x44));
        } else {
            write_error_record("", "unknown_source", source);
            return 1;
        }
        data::save_dataset(train, out_dir / "train");
        data::save_dataset(test, out_dir / "test");
        std::cout << out_dir.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        write_error_record("", "import_failed", e.what());
        return 1;
    }
}

}  // namespace lvg::cli
