// Command-line runner for the plate experiments. Each subcommand selects an
// experiment family; parameters come from an optional config file plus
// command-line overrides. Exit codes: 0 success, 1 config error, 2 solver
// abort.

#include "fvk/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    int threads = 0;
    bool deterministic = false;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (key = value lines)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--threads", args.threads, "worker threads for independent sweep points");
    cmd->add_flag("--deterministic", args.deterministic, "force single-threaded, bitwise reproducible runs");
    cmd->add_option("--set", args.overrides, "extra 'key=value' config overrides")->take_all();
}

int run(const std::string& kind, const CommonArgs& args) {
    std::string text;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw fvk::ConfigError("cannot open config file " + args.config_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    for (const auto& kv : args.overrides) text += "\n" + kv;
    fvk::ExperimentConfig cfg = fvk::parse_config_text(text);
    if (cfg.kind.empty()) cfg.kind = kind;
    if (cfg.kind != kind)
        throw fvk::ConfigError("config sets experiment '" + cfg.kind + "' but the subcommand is '" + kind + "'");
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.threads > 0) cfg.threads = args.threads;
    if (args.deterministic) cfg.deterministic = true;

    fvk::ExperimentResult res = fvk::run_experiment(cfg);
    if (res.exit_code == 0)
        std::cout << "done: " << cfg.kind << " -> " << cfg.out_dir << "\n";
    else
        std::cerr << "solver abort: " << res.abort_reason << "\n";
    return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite element gradient flow for fine-tunable plate energies"};
    app.require_subcommand(1);

    const char* kinds[] = {"flat_disc_sweep", "curvature_inversion", "cardboard", "bilayer_fold", "single_run"};
    const char* descs[] = {"sphere-cylinder transition sweep over the membrane weight",
                           "spontaneous-curvature continuation from 1 to -1",
                           "indented cylindrical plate with and without predamage",
                           "two-parameter bilayer with a straight or curved crease",
                           "one flow run fully described by the config file"};
    std::map<std::string, CommonArgs> args;
    for (int i = 0; i < 5; ++i) add_common(app.add_subcommand(kinds[i], descs[i]), args[kinds[i]]);

    CLI11_PARSE(app, argc, argv);

    std::string kind = app.get_subcommands().front()->get_name();
    try {
        return run(kind, args[kind]);
    } catch (const fvk::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const fvk::SolverError& e) {
        std::cerr << "solver abort: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
