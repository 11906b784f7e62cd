#include "mmfuse/harness.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace mmfuse {

AblationReport run_ablation(const Dataset& data, const TrainConfig& base) {
    const auto& kinds = all_fusion_kinds();
    std::vector<std::optional<TrainResult>> results(kinds.size());
    std::vector<std::exception_ptr> errors(kinds.size());

    std::vector<std::thread> workers;
    workers.reserve(kinds.size());
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        workers.emplace_back([&, k] {
            try {
                TrainConfig config = base;
                config.fusion = kinds[k];
                results[k].emplace(train(data, config));
            } catch (...) {
                errors[k] = std::current_exception();
            }
        });
    }
    for (auto& worker : workers) worker.join();
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        if (errors[k]) std::rethrow_exception(errors[k]);  // abort the whole run
    }

    // The split depends only on (data, seed), never the fusion kind; make
    // that comparability guarantee explicit.
    for (std::size_t k = 1; k < kinds.size(); ++k) {
        if (results[k]->train_indices != results[0]->train_indices ||
            results[k]->val_indices != results[0]->val_indices) {
            throw std::logic_error("run_ablation: rows trained on different splits");
        }
    }

    AblationReport report;
    report.config = base;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        const EvalReport eval =
            evaluate(results[k]->model, data, results[k]->val_indices);
        report.rows.push_back({kinds[k], eval.accuracy, eval.precision_macro, eval.auc_macro});
    }
    return report;
}

void write_ablation_csv(const AblationReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << "fusion,accuracy,precision_macro,auc_macro\n";
    for (const auto& row : report.rows) {
        out << fusion_name(row.fusion) << "," << format_double(row.accuracy) << ","
            << format_double(row.precision_macro) << "," << format_double(row.auc_macro)
            << "\n";
    }
}

std::string ablation_to_json(const AblationReport& report) {
    nlohmann::json doc;
    doc["config"] = nlohmann::json::parse(train_config_to_json(report.config));
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json entry;
        entry["fusion"] = fusion_name(row.fusion);
        entry["accuracy"] = row.accuracy;
        entry["precision_macro"] = row.precision_macro;
        entry["auc_macro"] = row.auc_macro;
        rows.push_back(std::move(entry));
    }
    doc["rows"] = std::move(rows);
    return doc.dump(2);
}

BenchReport run_bench(ModelBundle& model, const Dataset& data, std::size_t batch_size,
                      std::size_t repeats, const std::string& note) {
    if (batch_size < 1) {
        throw std::invalid_argument("run_bench: batch size must be >= 1");
    }
    if (repeats < 3) {
        throw std::invalid_argument("run_bench: repeats must be >= 3 "
                                    "(one warm-up plus at least two measurements)");
    }
    if (data.size() < batch_size) {
        throw std::invalid_argument("run_bench: dataset holds " +
                                    std::to_string(data.size()) +
                                    " samples, fewer than the batch size " +
                                    std::to_string(batch_size));
    }

    BenchReport report;
    report.batch_size = batch_size;
    report.batches = data.size() / batch_size;
    report.repeats = repeats - 1;
    report.note = note;

    const std::size_t covered = report.batches * batch_size;
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < covered; ++i) {
            if (data.is_raw()) {
                model.forward(data.raw[i]);
            } else {
                model.forward(data.embedding[i]);
            }
        }
        const auto stop = std::chrono::steady_clock::now();
        if (r == 0) continue;  // warm-up
        report.wall_seconds.push_back(std::chrono::duration<double>(stop - start).count());
    }

    double sum = 0.0;
    for (double w : report.wall_seconds) sum += w;
    report.mean_seconds = sum / static_cast<double>(report.wall_seconds.size());
    double sq = 0.0;
    for (double w : report.wall_seconds) {
        sq += (w - report.mean_seconds) * (w - report.mean_seconds);
    }
    report.std_seconds = std::sqrt(sq / static_cast<double>(report.wall_seconds.size() - 1));
    report.samples_per_second = static_cast<double>(covered) / report.mean_seconds;
    return report;
}

std::string bench_to_json(const BenchReport& report) {
    nlohmann::json doc;
    doc["batch_size"] = report.batch_size;
    doc["repeats"] = report.repeats;
    doc["batches"] = report.batches;
    doc["wall_seconds"] = report.wall_seconds;
    doc["mean_seconds"] = report.mean_seconds;
    doc["std_seconds"] = report.std_seconds;
    doc["samples_per_second"] = report.samples_per_second;
    doc["note"] = report.note;
    return doc.dump(2);
}

}  // namespace mmfuse
