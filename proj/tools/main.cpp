#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "mmfuse/data.hpp"
#include "mmfuse/engine.hpp"
#include "mmfuse/harness.hpp"

namespace {

using namespace mmfuse;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

struct GenDataArgs {
    std::string mode = "embedding";
    std::string rule;
    std::size_t n = 0;
    std::size_t d = 8;
    bool d_given = false;
    std::uint64_t seed = 0;
    std::string out;
};

void run_gen_data(const GenDataArgs& args) {
    const LabelRule rule = rule_from_name(args.rule);
    Dataset data;
    if (args.mode == "embedding") {
        if (format_from_path(args.out) != DatasetFormat::EmbeddingCsv) {
            throw std::runtime_error("embedding datasets are written as .csv, got " + args.out);
        }
        data.embedding = gen_embedding_dataset(rule, args.n, args.d, args.seed);
        save_dataset(data, args.out, DatasetFormat::EmbeddingCsv);
    } else if (args.mode == "raw") {
        if (args.d_given) {
            throw std::runtime_error("--d applies only to embedding mode");
        }
        if (format_from_path(args.out) != DatasetFormat::RawJsonl) {
            throw std::runtime_error("raw datasets are written as .jsonl, got " + args.out);
        }
        data.raw = gen_raw_dataset(rule, args.n, args.seed, EncoderConfig{});
        save_dataset(data, args.out, DatasetFormat::RawJsonl);
    } else {
        throw std::runtime_error("unknown mode '" + args.mode +
                                 "' (expected embedding or raw)");
    }
    std::cout << "wrote " << data.size() << " samples to " << args.out << "\n";
}

struct TrainArgs {
    std::string data_path;
    std::string fusion;
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
    std::string history;
};

void run_train(const TrainArgs& args) {
    TrainConfig config = args.config_path.empty()
                             ? TrainConfig{}
                             : train_config_from_json(read_file(args.config_path));
    if (!args.fusion.empty()) config.fusion = fusion_from_name(args.fusion);
    if (args.seed_given) config.seed = args.seed;
    config.validate();

    const Dataset data = load_dataset(args.data_path, format_from_path(args.data_path));
    TrainResult result = train(data, config);
    save_model(result.model, args.out);
    if (!args.history.empty()) write_history_csv(result.history, args.history);

    const EpochStats& last = result.history.back();
    std::cout << "trained " << result.history.size() << " epochs on "
              << result.train_indices.size() << " samples; final train loss "
              << format_double(last.train_loss) << ", val accuracy "
              << format_double(last.val_accuracy) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal fusion classifier: synthetic data, training, "
                 "evaluation, ablation, and benchmarking"};
    app.require_subcommand(1);
    if (argc <= 1) {
        std::cerr << app.help();
        return 1;
    }

    GenDataArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--mode", gen_args.mode, "embedding or raw")->capture_default_str();
    gen->add_option("--rule", gen_args.rule,
                    "text-only, image-only, additive, or multiplicative")
        ->required();
    gen->add_option("--n", gen_args.n, "sample count")->required();
    gen->add_option("--d", gen_args.d, "embedding dimension")->capture_default_str();
    gen->add_option("--seed", gen_args.seed, "generator seed")->capture_default_str();
    gen->add_option("--out", gen_args.out, "output path (.csv or .jsonl)")->required();

    std::string pair_log, pair_out, pair_diag;
    auto* pair = app.add_subcommand("pair", "Pair images with following texts");
    pair->add_option("--log", pair_log, "message log (JSON lines)")->required();
    pair->add_option("--out", pair_out, "paired samples output (.jsonl)")->required();
    pair->add_option("--diag", pair_diag, "diagnostics JSON output")->required();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--data", train_args.data_path, "dataset path")->required();
    train_cmd->add_option("--fusion", train_args.fusion,
                          "fusion kind (overrides the config file)");
    train_cmd->add_option("--config", train_args.config_path,
                          "JSON file overriding TrainConfig defaults");
    train_cmd->add_option("--seed", train_args.seed, "seed (overrides the config file)");
    train_cmd->add_option("--out", train_args.out, "model output path")->required();
    train_cmd->add_option("--history", train_args.history, "per-epoch CSV output");

    std::string eval_model, eval_data, eval_report, eval_roc;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a dataset");
    eval_cmd->add_option("--model", eval_model, "model path")->required();
    eval_cmd->add_option("--data", eval_data, "dataset path")->required();
    eval_cmd->add_option("--report", eval_report, "report JSON output")->required();
    eval_cmd->add_option("--roc-csv", eval_roc, "per-class ROC points CSV output");

    std::string ablate_data, ablate_prefix, ablate_config;
    std::uint64_t ablate_seed = 0;
    auto* ablate = app.add_subcommand("ablate", "Train and compare all five fusion kinds");
    ablate->add_option("--data", ablate_data, "dataset path")->required();
    ablate->add_option("--seed", ablate_seed, "shared training seed")->required();
    ablate->add_option("--out-prefix", ablate_prefix, "writes PREFIX.csv and PREFIX.json")
        ->required();
    ablate->add_option("--config", ablate_config, "JSON file overriding TrainConfig defaults");

    std::string bench_model, bench_data, bench_note;
    std::size_t bench_batch = 128, bench_repeats = 5;
    auto* bench = app.add_subcommand("bench", "Time forward passes over full batches");
    bench->add_option("--model", bench_model, "model path")->required();
    bench->add_option("--data", bench_data, "dataset path")->required();
    bench->add_option("--batch", bench_batch, "batch size")->capture_default_str();
    bench->add_option("--repeats", bench_repeats, "runs including one warm-up")
        ->capture_default_str();
    bench->add_option("--note", bench_note, "hardware note recorded in the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);  // --help
        }
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) {
            gen_args.d_given = gen->count("--d") > 0;
            run_gen_data(gen_args);
        } else if (pair->parsed()) {
            const PairingResult result = pair_messages(load_message_log(pair_log));
            save_pairs(result, pair_out, pair_diag);
            std::cout << "paired " << result.pairs.size() << " images, dropped "
                      << result.dropped << "\n";
        } else if (train_cmd->parsed()) {
            train_args.seed_given = train_cmd->count("--seed") > 0;
            run_train(train_args);
        } else if (eval_cmd->parsed()) {
            ModelBundle model = load_model(eval_model);
            const Dataset data = load_dataset(eval_data, format_from_path(eval_data));
            const EvalReport report = evaluate(model, data);
            std::ofstream out(eval_report);
            if (!out) {
                throw std::runtime_error("cannot write " + eval_report);
            }
            out << eval_report_to_json(report) << "\n";
            if (!eval_roc.empty()) write_roc_csv(report, eval_roc);
            std::cout << "accuracy " << format_double(report.accuracy) << " on " << report.n
                      << " samples\n";
        } else if (ablate->parsed()) {
            TrainConfig base = ablate_config.empty()
                                   ? TrainConfig{}
                                   : train_config_from_json(read_file(ablate_config));
            base.seed = ablate_seed;
            const Dataset data = load_dataset(ablate_data, format_from_path(ablate_data));
            const AblationReport report = run_ablation(data, base);
            write_ablation_csv(report, ablate_prefix + ".csv");
            std::ofstream out(ablate_prefix + ".json");
            if (!out) {
                throw std::runtime_error("cannot write " + ablate_prefix + ".json");
            }
            out << ablation_to_json(report) << "\n";
            for (const auto& row : report.rows) {
                std::cout << fusion_name(row.fusion) << ": accuracy "
                          << format_double(row.accuracy) << ", precision "
                          << format_double(row.precision_macro) << ", auc "
                          << format_double(row.auc_macro) << "\n";
            }
        } else if (bench->parsed()) {
            ModelBundle model = load_model(bench_model);
            const Dataset data = load_dataset(bench_data, format_from_path(bench_data));
            const BenchReport report =
                run_bench(model, data, bench_batch, bench_repeats, bench_note);
            std::cout << bench_to_json(report) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
