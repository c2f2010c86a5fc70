#ifndef LVG_CLI_HPP
#define LVG_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lvg/data.hpp"
#include "lvg/nets.hpp"
#include "lvg/trainer.hpp"

namespace lvg::cli {

inline constexpr const char* kVersion = "0.1.0";

// Merged configuration of one run: config file first, flag overrides on top.
struct RunConfig {
    trainer::TrainConfig train;
    nets::ArchitectureSpec arch;
    data::LoadOptions data;
    std::vector<std::string> tasks = {"digits", "fashion"};
    std::string run_dir = "runs/latest";
    std::string run_id = "run";
    bool track_bounds = true;
    int64_t bounds_sample_n = 1000;
    int64_t eval_samples = 2000;
};

RunConfig load_config(const std::filesystem::path& file);
RunConfig default_config();
std::string config_to_json_string(const RunConfig& cfg);
RunConfig config_from_json_string(const std::string& text);

struct RunPaths {
    std::filesystem::path root;
    std::filesystem::path manifest;
    std::filesystem::path metrics_csv;
    std::filesystem::path bounds_csv;
    std::filesystem::path eval_dir;
    std::filesystem::path checkpoints;
    std::filesystem::path snapshots;
    static RunPaths at(const std::filesystem::path& root);
    void create() const;
};

// Written atomically at run start, finalized (status, end time, artifacts) at
// the end.
void write_manifest_start(const RunPaths& paths, const RunConfig& cfg);
void finalize_manifest(const RunPaths& paths, const std::string& status,
                       const std::vector<std::string>& artifacts);

void write_error_record(const std::filesystem::path& dir, const std::string& code,
                        const std::string& message);

// Subcommand entry points; each returns a process exit status.
int cmd_train(const RunConfig& cfg);
int cmd_eval(const std::filesystem::path& ckpt, const RunConfig& cfg);
int cmd_interpolate(const std::filesystem::path& ckpt, const RunConfig& cfg,
                    const std::string& task, int64_t index_a, int64_t index_b, int64_t steps);
int cmd_traverse(const std::filesystem::path& ckpt, const RunConfig& cfg,
                 const std::string& task, int64_t sample_index, int64_t dim, double lo, double hi,
                 int64_t steps);
int cmd_replay_sample(const std::filesystem::path& snapshot_dir, int64_t n, uint64_t seed,
                      const std::filesystem::path& out_dir);
int cmd_bounds(const std::filesystem::path& run_dir, const RunConfig& cfg);
int cmd_import_data(const std::string& source, const std::filesystem::path& out_dir,
                    const std::vector<std::string>& idx_files, int64_t n_train, int64_t n_test,
                    uint64_t seed);

}  // namespace lvg::cli

#endif
