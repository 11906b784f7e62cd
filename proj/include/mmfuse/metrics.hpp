#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mmfuse/tensor.hpp"

namespace mmfuse {

// One point of a ROC curve; the sweep starts at threshold +infinity (0,0)
// and ends at the lowest score (1,1), so fpr and tpr are non-decreasing.
struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

// Mean over classes of TP/(TP+FP); a class never predicted contributes 0.
double precision_macro(const std::vector<int>& pred, const std::vector<int>& truth,
                       int num_classes = 3);

// confusion[true_label][predicted_label] counts.
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& pred,
                                                       const std::vector<int>& truth,
                                                       int num_classes = 3);

// Threshold sweep over the descending unique scores plus a +infinity
// sentinel; labels are 0/1 with 1 positive. Both classes must be present.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                const std::vector<int>& binary_labels);

// Trapezoidal area under roc_curve.
double auc(const std::vector<double>& scores, const std::vector<int>& binary_labels);

// The same quantity as the Mann-Whitney rank statistic (ties take half
// credit); kept as an independent oracle for auc.
double auc_rank(const std::vector<double>& scores, const std::vector<int>& binary_labels);

// Mean of the one-vs-rest binary AUCs, scoring class c by probability
// column c. Every class must appear in the labels.
double auc_macro_ovr(const Tensor& probs, const std::vector<int>& labels);

struct ClassMetrics {
    double precision = 0.0;
    double auc = 0.0;
    std::vector<RocPoint> roc_points;
};

struct EvalReport {
    double accuracy = 0.0;
    double precision_macro = 0.0;
    double auc_macro = 0.0;
    bool auc_defined = false;  // false when some class is absent
    std::vector<ClassMetrics> per_class;
    std::vector<std::vector<std::size_t>> confusion;
    std::size_t n = 0;
    double wall_seconds = 0.0;
};

// JSON document with the exact field names above; undefined AUCs are null.
std::string eval_report_to_json(const EvalReport& report);

// One row per ROC point: class,threshold,fpr,tpr (threshold "inf" for the
// sentinel).
void write_roc_csv(const EvalReport& report, const std::string& path);

}  // namespace mmfuse
