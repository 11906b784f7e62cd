#include "mmfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "mmfuse/data.hpp"

namespace mmfuse {

namespace {

void check_labels(const std::vector<int>& pred, const std::vector<int>& truth,
                  int num_classes) {
    if (truth.empty()) {
        throw std::invalid_argument("metrics: empty input");
    }
    if (pred.size() != truth.size()) {
        throw std::invalid_argument("metrics: " + std::to_string(pred.size()) +
                                    " predictions for " + std::to_string(truth.size()) +
                                    " labels");
    }
    for (const auto* v : {&pred, &truth}) {
        for (int label : *v) {
            if (label < 0 || label >= num_classes) {
                throw std::invalid_argument("metrics: label " + std::to_string(label) +
                                            " out of range [0, " +
                                            std::to_string(num_classes) + ")");
            }
        }
    }
}

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("metrics: " + std::to_string(scores.size()) +
                                    " scores for " + std::to_string(labels.size()) +
                                    " labels");
    }
    std::size_t pos = 0;
    for (int label : labels) {
        if (label != 0 && label != 1) {
            throw std::invalid_argument("metrics: binary labels must be 0 or 1");
        }
        pos += static_cast<std::size_t>(label);
    }
    if (pos == 0 || pos == labels.size()) {
        throw std::invalid_argument("metrics: AUC undefined with a single class present");
    }
}

}  // namespace

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    check_labels(pred, truth, std::numeric_limits<int>::max());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (pred[i] == truth[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& pred,
                                                       const std::vector<int>& truth,
                                                       int num_classes) {
    check_labels(pred, truth, num_classes);
    std::vector<std::vector<std::size_t>> counts(
        static_cast<std::size_t>(num_classes),
        std::vector<std::size_t>(static_cast<std::size_t>(num_classes), 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
    }
    return counts;
}

double precision_macro(const std::vector<int>& pred, const std::vector<int>& truth,
                       int num_classes) {
    const auto counts = confusion_matrix(pred, truth, num_classes);
    double total = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        std::size_t predicted = 0;  // TP + FP: everything predicted as c
        for (std::size_t t = 0; t < counts.size(); ++t) predicted += counts[t][c];
        if (predicted > 0) {
            total += static_cast<double>(counts[c][c]) / static_cast<double>(predicted);
        }
    }
    return total / static_cast<double>(num_classes);
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<int>& binary_labels) {
    check_binary(scores, binary_labels);
    const std::size_t n = scores.size();
    std::size_t pos = 0;
    for (int label : binary_labels) pos += static_cast<std::size_t>(label);
    const std::size_t neg = n - pos;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<RocPoint> points;
    points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < n) {
        const double threshold = scores[order[i]];
        // everything with score >= threshold is predicted positive, so a tie
        // group enters together
        while (i < n && scores[order[i]] == threshold) {
            if (binary_labels[order[i]] == 1) ++tp; else ++fp;
            ++i;
        }
        points.push_back({threshold, static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos)});
    }
    return points;
}

double auc(const std::vector<double>& scores, const std::vector<int>& binary_labels) {
    const std::vector<RocPoint> points = roc_curve(scores, binary_labels);
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
    }
    return area;
}

double auc_rank(const std::vector<double>& scores, const std::vector<int>& binary_labels) {
    check_binary(scores, binary_labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Mann-Whitney: AUC = (R_pos - P(P+1)/2) / (P*N) with average ranks over
    // tie groups, which awards ties exactly half credit.
    double rank_sum_pos = 0.0;
    std::size_t pos = 0, i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (binary_labels[order[k]] == 1) {
                rank_sum_pos += avg_rank;
                ++pos;
            }
        }
        i = j;
    }
    const std::size_t neg = n - pos;
    const double p = static_cast<double>(pos);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double auc_macro_ovr(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2 || probs.extent(0) != labels.size()) {
        throw std::invalid_argument("auc_macro_ovr: probability matrix " + probs.shape_str() +
                                    " does not match " + std::to_string(labels.size()) +
                                    " labels");
    }
    const std::size_t classes = probs.extent(1);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        std::vector<double> scores(labels.size());
        std::vector<int> binary(labels.size());
        bool present = false;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            scores[i] = probs[i * classes + c];
            binary[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
            present = present || binary[i] == 1;
        }
        if (!present) {
            throw std::invalid_argument("auc_macro_ovr: class " + std::to_string(c) +
                                        " absent from labels");
        }
        total += auc(scores, binary);
    }
    return total / static_cast<double>(classes);
}

std::string eval_report_to_json(const EvalReport& report) {
    nlohmann::json doc;
    doc["accuracy"] = report.accuracy;
    doc["precision_macro"] = report.precision_macro;
    doc["auc_macro"] = report.auc_defined ? nlohmann::json(report.auc_macro)
                                          : nlohmann::json(nullptr);
    doc["n"] = report.n;
    doc["wall_seconds"] = report.wall_seconds;
    doc["confusion"] = report.confusion;

    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& cls : report.per_class) {
        nlohmann::json entry;
        entry["precision"] = cls.precision;
        entry["auc"] = report.auc_defined ? nlohmann::json(cls.auc) : nlohmann::json(nullptr);
        nlohmann::json roc = nlohmann::json::array();
        for (const auto& point : cls.roc_points) {
            nlohmann::json p;
            p["threshold"] = std::isfinite(point.threshold)
                                 ? nlohmann::json(point.threshold)
                                 : nlohmann::json(nullptr);
            p["fpr"] = point.fpr;
            p["tpr"] = point.tpr;
            roc.push_back(std::move(p));
        }
        entry["roc_points"] = std::move(roc);
        per_class.push_back(std::move(entry));
    }
    doc["per_class"] = std::move(per_class);
    return doc.dump(2);
}

void write_roc_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << "class,threshold,fpr,tpr\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        for (const auto& point : report.per_class[c].roc_points) {
            out << label_name(static_cast<int>(c)) << ","
                << (std::isfinite(point.threshold) ? format_double(point.threshold) : "inf")
                << "," << format_double(point.fpr) << "," << format_double(point.tpr) << "\n";
        }
    }
}

}  // namespace mmfuse
