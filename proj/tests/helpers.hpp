#pragma once

// Shared test utilities: finite-difference gradient checking, scratch
// directories, and a helper for driving the command-line binary.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <sys/wait.h>

#include "mmfuse/layers.hpp"
#include "mmfuse/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-4});
    return std::fabs(a - b) / denom;
}

// Central finite differences over every element of every listed parameter,
// compared against the already-accumulated analytic gradients. loss() must
// re-run the forward pass and return the scalar objective.
inline double max_param_fd_err(const mmfuse::ParamRefs& params,
                               const std::function<double()>& loss, double h = 1e-5) {
    double worst = 0.0;
    for (const auto& [name, p] : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double up = loss();
            p->value[i] = keep - h;
            const double down = loss();
            p->value[i] = keep;
            worst = std::max(worst, rel_err(p->grad[i], (up - down) / (2.0 * h)));
        }
    }
    return worst;
}

// Same check for a non-parameter input tensor and its analytic gradient.
inline double max_input_fd_err(mmfuse::Tensor& x, const mmfuse::Tensor& analytic,
                               const std::function<double()>& loss, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss();
        x[i] = keep - h;
        const double down = loss();
        x[i] = keep;
        worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

// Fixed random projection turning a tensor output into a scalar objective;
// its gradient with respect to the output is the weight tensor itself.
inline double proj_loss(const mmfuse::Tensor& out, const mmfuse::Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
    return s;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("test helper: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// Self-deleting scratch directory under the system temp root.
class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("mmfuse_test_" + std::to_string(tick) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs the CLI binary with the given argument string, capturing both streams.
inline CliResult run_cli(const std::string& args, const TempDir& dir) {
    static std::atomic<unsigned> counter{0};
    const unsigned id = counter++;
    const std::string out_path = dir.file("cli_out_" + std::to_string(id) + ".txt");
    const std::string err_path = dir.file("cli_err_" + std::to_string(id) + ".txt");
    const std::string cmd = std::string(MMFUSE_CLI_PATH) + " " + args + " > " + out_path +
                            " 2> " + err_path;
    const int raw = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    result.out = read_file(out_path);
    result.err = read_file(err_path);
    return result;
}

}  // namespace testutil
