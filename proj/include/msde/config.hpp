#pragma once

#include "msde/common.hpp"
#include "msde/functional.hpp"
#include "msde/ldp.hpp"
#include "msde/models.hpp"
#include "msde/monotone_operator.hpp"
#include "msde/simulation.hpp"
#include "msde/skeleton.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace msde {

/// Invalid configuration. `key` is the dotted path of the offending entry,
/// `line` its 1-based line in the source text (0 if unknown).
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, std::string key, int line)
        : std::runtime_error(what), key_(std::move(key)), line_(line) {}
    const std::string& key() const noexcept { return key_; }
    int line() const noexcept { return line_; }

private:
    std::string key_;
    int line_;
};

enum class TubeReference { ZeroControl, RateMinimizer };

struct SimulateSettings {
    double eps = 1.0;
    int paths = 1;
    int probe_count = 16;
};

struct SkeletonSettings {
    Matrix control;  // d x M
};

struct RateSettings {
    std::optional<Vector> target;
    RateOptions options;
};

struct VerifySettings {
    bool tilt = true;
};

struct CheckOpsSettings {
    long samples = 10000;
    double radius = 10.0;
};

struct SuiteSettings {
    std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9};
};

struct ExperimentConfig {
    std::string source;  // raw bytes, hashed into the manifest
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    Model model = Model::brownian(1);
    MonotoneOperator op = MonotoneOperator::indicator(ConvexDomain::whole_space(1));
    TimeGrid grid{1.0, 512};
    int control_intervals = 32;
    Vector x0;
    std::vector<double> eps_list;
    long n_paths = 1000;
    std::optional<EventSpec> event;
    TubeReference tube_reference = TubeReference::ZeroControl;
    std::optional<PathFunctional> functional;

    SimulateSettings simulate;
    SkeletonSettings skeleton;
    RateSettings rate;
    VerifySettings verify;
    CheckOpsSettings check_ops;
    SuiteSettings suite;
};

/// Parses and validates a JSON experiment config. Unknown keys are rejected;
/// `seed` is mandatory. Throws ConfigError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

}  // namespace msde
