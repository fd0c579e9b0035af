#pragma once

#include "rcdlab/evi.hpp"
#include "rcdlab/io.hpp"

#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rcdlab {

struct Tolerances {
    double gap = 1e-9;           // ot relative duality gap
    double inner = 1e-9;         // jko inner duality gap
    double geodesic = 1e-8;      // entropy minimiser gap
    double quadratic = 1e-12;    // parallelogram law
    double additivity = 1e-10;   // heat flow on mixtures
    double evi = 1e-3;

    /// Unknown keys are a ConfigError.
    void overlay(const io::json& j);
    io::json to_json() const;
};

struct RunOptions {
    std::optional<std::uint64_t> seed;   // overrides the config seed
    unsigned threads = 1;
    io::json tolerance_overrides = io::json::object();
};

/// Scalar diagnostic row of the combined CSV.
struct Scalar {
    std::string quantity;
    double index = 0.0;
    double value = 0.0;
};

struct TaskArtifact {
    std::string id;
    std::string kind;
    io::json document;   // full artifact, metadata included
    bool assertion_failed = false;
    std::vector<Scalar> scalars;
    std::vector<ProbMeasure> measures;   // referable by later tasks
};

/// A task threw; inner is the original exception.
class TaskFailure : public Error {
public:
    TaskFailure(std::string task, std::exception_ptr inner, const std::string& what)
        : Error("task " + task + ": " + what), task_(std::move(task)), inner_(std::move(inner)) {}
    const std::string& task() const noexcept { return task_; }
    const std::exception_ptr& inner() const noexcept { return inner_; }

private:
    std::string task_;
    std::exception_ptr inner_;
};

/// Space, seed and tolerances shared by the tasks of one run.
class Session {
public:
    Session(SpacePtr space, std::uint64_t seed, Tolerances tol, unsigned threads,
            std::filesystem::path base_dir, std::string config_hash);

    const SpacePtr& space() const noexcept { return space_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const Tolerances& tolerances() const noexcept { return tol_; }
    unsigned threads() const noexcept { return threads_; }
    const std::filesystem::path& base_dir() const noexcept { return base_dir_; }
    const std::string& config_hash() const noexcept { return hash_; }

    /// measure_from_json plus {"from_task": id, "index": k} or {"from_task": id, "time": t}.
    ProbMeasure measure(const io::json& spec) const;
    void publish(const std::string& task, const std::vector<double>& times, std::vector<ProbMeasure> measures);

private:
    SpacePtr space_;
    std::uint64_t seed_;
    Tolerances tol_;
    unsigned threads_;
    std::filesystem::path base_dir_;
    std::string hash_;
    std::map<std::string, std::pair<std::vector<double>, std::vector<ProbMeasure>>> produced_;
};

/// kind: validate | ot | geodesic | form | flow | verify. Errors come out as TaskFailure.
TaskArtifact run_task(const io::json& task, const Session& session);

struct RunResult {
    bool assertion_failed = false;
    std::string failed_task;
    std::filesystem::path report_path;           // artifact of the first failed assertion
    std::vector<std::filesystem::path> artifacts;
    io::json summary;
};

/// Executes the tasks in order ({"parallel": [...]} groups run concurrently), writes
/// <id>.json per task, diagnostics.csv and run.json into out_dir.
RunResult run_config(const io::json& config, const std::filesystem::path& base_dir,
                     const std::filesystem::path& out_dir, const RunOptions& options);

io::json report_to_json(const InequalityReport& r);

}  // namespace rcdlab
