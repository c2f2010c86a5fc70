#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "lvg/cli.hpp"

using namespace lvg;

namespace {

// flags shared by subcommands that need a full run configuration
struct ConfigArgs {
    std::string config_file;
    std::string mode;
    std::string tasks;
    std::string run_dir;
    std::string run_id;
    double lr = -1;
    int64_t epochs = -1;
    int64_t batch_size = -1;
    int64_t n_labelled = -1;
    double replay_fraction = -2;
    double beta = -1;
    double gamma = -1;
    double lambda_gp = -1;
    double temperature = -1;
    int64_t n_critic = -1;
    int64_t synth_train = -1;
    int64_t synth_test = -1;
    uint64_t seed = 0;
    bool seed_set = false;
    int64_t threads = -1;
    std::string arch_kind;
    int64_t dim_z = -1;
    int64_t scale = -1;  // target image side
    bool no_bounds = false;
    bool disentangle = false;
};

void add_config_flags(CLI::App* app, ConfigArgs& args) {
    app->add_option("--config", args.config_file, "config file (json)");
    app->add_option("--mode", args.mode, "supervised | semi | unsupervised");
    app->add_option("--tasks", args.tasks, "comma-separated task names or directories");
    app->add_option("--run-dir", args.run_dir, "run directory");
    app->add_option("--run-id", args.run_id, "run identifier");
    app->add_option("--lr", args.lr, "learning rate");
    app->add_option("--epochs", args.epochs, "epochs per task");
    app->add_option("--batch-size", args.batch_size);
    app->add_option("--n-labelled", args.n_labelled, "labelled images per task (semi)");
    app->add_option("--replay-fraction", args.replay_fraction,
                    "replay fraction rho; negative selects (t-1)/t");
    app->add_option("--beta", args.beta, "semi-supervised mixing weight");
    app->add_option("--gamma", args.gamma, "disentanglement multiplier");
    app->add_option("--lambda-gp", args.lambda_gp, "gradient penalty weight");
    app->add_option("--temperature", args.temperature, "gumbel-softmax temperature");
    app->add_option("--n-critic", args.n_critic, "critic steps per generator step");
    app->add_option("--synth-train", args.synth_train, "train images per built-in task");
    app->add_option("--synth-test", args.synth_test, "test images per built-in task");
    auto* seed_opt = app->add_option("--seed", args.seed, "master seed");
    seed_opt->each([&args](const std::string&) { args.seed_set = true; });
    app->add_option("--threads", args.threads, "CPU threads");
    app->add_option("--arch", args.arch_kind, "conv | mlp");
    app->add_option("--dim-z", args.dim_z, "continuous code size");
    app->add_option("--scale", args.scale, "target image side (e.g. 14 for fast runs)");
    app->add_flag("--no-bounds", args.no_bounds, "disable the bounds tracker");
    app->add_flag("--disentangle", args.disentangle, "use the capacity-ramp kl_z term");
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

cli::RunConfig merge_config(const ConfigArgs& args) {
    cli::RunConfig cfg =
        args.config_file.empty() ? cli::default_config() : cli::load_config(args.config_file);
    if (!args.mode.empty()) cfg.train.mode = trainer::mode_from_string(args.mode);
    if (!args.tasks.empty()) cfg.tasks = split_csv(args.tasks);
    if (!args.run_dir.empty()) cfg.run_dir = args.run_dir;
    if (!args.run_id.empty()) cfg.run_id = args.run_id;
    if (args.lr > 0) cfg.train.lr = args.lr;
    if (args.epochs > 0) cfg.train.epochs = args.epochs;
    if (args.batch_size > 0) cfg.train.batch_size = args.batch_size;
    if (args.n_labelled >= 0) cfg.train.n_labelled = args.n_labelled;
    if (args.replay_fraction > -2) cfg.train.replay_fraction = args.replay_fraction;
    if (args.beta >= 0) cfg.train.weights.beta = args.beta;
    if (args.gamma >= 0) cfg.train.weights.gamma = args.gamma;
    if (args.lambda_gp >= 0) cfg.train.weights.lambda_gp = args.lambda_gp;
    if (args.n_critic > 0) cfg.train.weights.n_critic = args.n_critic;
    if (args.synth_train > 0) cfg.data.synth_train = args.synth_train;
    if (args.synth_test > 0) cfg.data.synth_test = args.synth_test;
    if (args.seed_set) cfg.train.seed = args.seed;
    if (args.threads > 0) cfg.train.threads = args.threads;
    if (!args.arch_kind.empty()) cfg.arch.kind = args.arch_kind;
    if (args.dim_z > 0) cfg.arch.dim_z = args.dim_z;
    if (args.scale > 0) {
        cfg.data.target_h = args.scale;
        cfg.data.target_w = args.scale;
    }
    if (args.no_bounds) cfg.track_bounds = false;
    if (args.disentangle) cfg.train.weights.disentangle = true;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lifelong hybrid generative model: training, evaluation, bounds probes"};
    app.require_subcommand(1);

    ConfigArgs targs;
    auto* train = app.add_subcommand("train", "run the lifelong task sequence");
    add_config_flags(train, targs);

    ConfigArgs eargs;
    std::string ckpt;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_config_flags(eval, eargs);
    eval->add_option("--ckpt", ckpt, "checkpoint directory")->required();

    ConfigArgs iargs;
    std::string ickpt, itask = "digits";
    int64_t ia = 0, ib = 1, isteps = 8;
    auto* interp = app.add_subcommand("interpolate", "latent interpolation strip");
    add_config_flags(interp, iargs);
    interp->add_option("--ckpt", ickpt)->required();
    interp->add_option("--task", itask);
    interp->add_option("--index-a", ia);
    interp->add_option("--index-b", ib);
    interp->add_option("--steps", isteps);

    ConfigArgs vargs;
    std::string vckpt, vtask = "digits";
    int64_t vindex = 0, vdim = 0, vsteps = 9;
    double vlo = -3.0, vhi = 3.0;
    auto* trav = app.add_subcommand("traverse", "latent traversal strip");
    add_config_flags(trav, vargs);
    trav->add_option("--ckpt", vckpt)->required();
    trav->add_option("--task", vtask);
    trav->add_option("--index", vindex);
    trav->add_option("--dim", vdim)->required();
    trav->add_option("--lo", vlo);
    trav->add_option("--hi", vhi);
    trav->add_option("--steps", vsteps);

    std::string snap_dir, rs_out = "replay_samples";
    int64_t rs_n = 64;
    uint64_t rs_seed = 7;
    auto* rsample = app.add_subcommand("replay-sample", "sample a stored snapshot");
    rsample->add_option("--snapshot", snap_dir)->required();
    rsample->add_option("--n", rs_n);
    rsample->add_option("--seed", rs_seed);
    rsample->add_option("--out", rs_out);

    ConfigArgs bargs;
    std::string bdir;
    auto* bnds = app.add_subcommand("bounds", "bound probes on stored snapshots");
    add_config_flags(bnds, bargs);
    bnds->add_option("--run", bdir, "run directory with snapshots/")->required();

    std::string src, out_dir;
    std::vector<std::string> idx_files;
    int64_t id_train = 5000, id_test = 1000;
    uint64_t id_seed = 77;
    auto* imp = app.add_subcommand("import-data", "convert archives to the dataset layout");
    imp->add_option("--source", src, "idx | synth-digits | synth-fashion")->required();
    imp->add_option("--out", out_dir)->required();
    imp->add_option("--idx-files", idx_files,
                    "train-images train-labels test-images test-labels");
    imp->add_option("--n-train", id_train);
    imp->add_option("--n-test", id_test);
    imp->add_option("--seed", id_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cli::cmd_train(merge_config(targs));
        if (eval->parsed()) return cli::cmd_eval(ckpt, merge_config(eargs));
        if (interp->parsed())
            return cli::cmd_interpolate(ickpt, merge_config(iargs), itask, ia, ib, isteps);
        if (trav->parsed())
            return cli::cmd_traverse(vckpt, merge_config(vargs), vtask, vindex, vdim, vlo, vhi,
                                     vsteps);
        if (rsample->parsed()) return cli::cmd_replay_sample(snap_dir, rs_n, rs_seed, rs_out);
        if (bnds->parsed()) return cli::cmd_bounds(bdir, merge_config(bargs));
        if (imp->parsed())
            return cli::cmd_import_data(src, out_dir, idx_files, id_train, id_test, id_seed);
    } catch (const std::exception& e) {
        cli::write_error_record("", "cli_error", e.what());
        return 1;
    }
    return 0;
}
