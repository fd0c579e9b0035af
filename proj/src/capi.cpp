#include "rcdlab/rcdlab.h"

#include "rcdlab/heat.hpp"
#include "rcdlab/ot.hpp"
#include "rcdlab/pipeline.hpp"

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>

struct rcd_space {
    rcdlab::SpacePtr ptr;
};

struct rcd_result {
    std::string json;
    bool assertion_failed = false;
    std::string failed_task;
    std::string report_path;
};

namespace {

using rcdlab::io::json;

struct LastError {
    std::string message;
    std::size_t line = 0;
    std::size_t column = 0;
    std::string task;
};

thread_local LastError last;

void set_error(std::string msg, std::size_t line = 0, std::size_t col = 0, std::string task = {}) {
    last = {std::move(msg), line, col, std::move(task)};
}

rcd_status classify(const std::exception_ptr& e, const std::string& task) {
    try {
        std::rethrow_exception(e);
    } catch (const rcdlab::TaskFailure& f) {
        const rcd_status s = classify(f.inner(), f.task());
        last.task = f.task();
        return s;
    } catch (const rcdlab::io::ConfigError& x) {
        set_error(x.what(), x.line(), x.column(), task);
        return RCD_ERR_PARSE;
    } catch (const rcdlab::InfeasibleIntermediate& x) {
        set_error(x.what(), 0, 0, task);
        return RCD_ERR_INFEASIBLE;
    } catch (const rcdlab::SolverError& x) {
        char gap[32];
        std::snprintf(gap, sizeof gap, "%.3g", x.achieved_gap());
        set_error(std::string(x.what()) + " (gap " + gap + ")", 0, 0, task);
        return RCD_ERR_SOLVER;
    } catch (const rcdlab::StructuralError& x) {
        set_error(x.what(), 0, 0, task);
        return RCD_ERR_PARSE;
    } catch (const rcdlab::InvalidArgument& x) {
        set_error(x.what(), 0, 0, task);
        return RCD_ERR_ARGUMENT;
    } catch (const std::filesystem::filesystem_error& x) {
        set_error(x.what(), 0, 0, task);
        return RCD_ERR_IO;
    } catch (const rcdlab::Error& x) {
        // write_atomic and friends
        set_error(x.what(), 0, 0, task);
        return RCD_ERR_IO;
    } catch (const json::exception& x) {
        set_error(x.what(), 0, 0, task);
        return RCD_ERR_PARSE;
    } catch (const std::bad_alloc&) {
        set_error("out of memory", 0, 0, task);
        return RCD_ERR_INTERNAL;
    } catch (const std::exception& x) {
        set_error(x.what(), 0, 0, task);
        return RCD_ERR_INTERNAL;
    } catch (...) {
        set_error("unknown error", 0, 0, task);
        return RCD_ERR_INTERNAL;
    }
}

template <class F>
rcd_status guarded(F&& f) {
    try {
        last = {};
        f();
        return RCD_OK;
    } catch (...) {
        return classify(std::current_exception(), {});
    }
}

unsigned env_threads() {
    if (const char* e = std::getenv("RCDLAB_THREADS")) {
        const long v = std::strtol(e, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return 0;
}

struct Options {
    rcdlab::RunOptions run;
    std::filesystem::path base_dir;
};

Options parse_options(const char* text) {
    Options o;
    const unsigned cap = env_threads();
    o.run.threads = cap > 0 ? cap : 1;
    if (!text || !*text) return o;
    const json j = rcdlab::io::parse_json(text, "options");
    if (j.contains("seed")) o.run.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threads")) {
        const auto t = j.at("threads").get<unsigned>();
        o.run.threads = std::max(1u, cap > 0 ? std::min(t, cap) : t);
    }
    if (j.contains("tolerances")) o.run.tolerance_overrides = j.at("tolerances");
    if (j.contains("base_dir")) o.base_dir = j.at("base_dir").get<std::string>();
    return o;
}

bool null_args(std::initializer_list<const void*> ps) {
    for (const void* p : ps)
        if (!p) {
            set_error("null argument");
            return true;
        }
    return false;
}

}  // namespace

extern "C" {

const char* rcd_schema_version(void) {
    static const std::string v = rcdlab::io::schema_version();
    return v.c_str();
}

const char* rcd_last_error(void) { return last.message.c_str(); }
size_t rcd_last_error_line(void) { return last.line; }
size_t rcd_last_error_column(void) { return last.column; }
const char* rcd_last_error_task(void) { return last.task.c_str(); }

rcd_status rcd_space_from_json(const char* text, const char* base_dir, int validate, rcd_space** out) {
    if (null_args({text, out})) return RCD_ERR_ARGUMENT;
    return guarded([&] {
        const json j = rcdlab::io::parse_json(text, "space");
        auto s = std::make_shared<const rcdlab::FiniteMMSpace>(
            rcdlab::io::space_from_json(j, base_dir ? base_dir : "", validate != 0));
        *out = new rcd_space{std::move(s)};
    });
}

rcd_status rcd_space_model(const char* kind, size_t n, rcd_space** out) {
    if (null_args({kind, out})) return RCD_ERR_ARGUMENT;
    return guarded([&] {
        auto s = std::make_shared<const rcdlab::FiniteMMSpace>(
            rcdlab::make_model_space(rcdlab::parse_model_kind(kind), n));
        *out = new rcd_space{std::move(s)};
    });
}

void rcd_space_free(rcd_space* space) { delete space; }

size_t rcd_space_size(const rcd_space* space) { return space ? space->ptr->size() : 0; }

rcd_status rcd_space_validate(const rcd_space* space, int* valid) {
    if (null_args({space, valid})) return RCD_ERR_ARGUMENT;
    return guarded([&] { *valid = rcdlab::validate_space(*space->ptr).passed ? 1 : 0; });
}

rcd_status rcd_w2(const rcd_space* space, const double* mu, const double* nu, double* w2, double* gap) {
    if (null_args({space, mu, nu, w2})) return RCD_ERR_ARGUMENT;
    return guarded([&] {
        const auto n = static_cast<Eigen::Index>(space->ptr->size());
        const rcdlab::ProbMeasure a(space->ptr, Eigen::Map<const Eigen::VectorXd>(mu, n));
        const rcdlab::ProbMeasure b(space->ptr, Eigen::Map<const Eigen::VectorXd>(nu, n));
        const rcdlab::KantorovichPair pair = rcdlab::kantorovich_potentials(a, b);
        *w2 = std::sqrt(2.0 * pair.primal);
        if (gap) *gap = pair.gap / std::max(1.0, pair.primal);
    });
}

rcd_status rcd_heat_apply(const rcd_space* space, const double* f, double t, double* out) {
    if (null_args({space, f, out})) return RCD_ERR_ARGUMENT;
    return guarded([&] {
        const auto n = static_cast<Eigen::Index>(space->ptr->size());
        const Eigen::VectorXd h = rcdlab::semigroup_apply(rcdlab::DirichletForm::calibrated(space->ptr),
                                                          Eigen::Map<const Eigen::VectorXd>(f, n), t);
        Eigen::Map<Eigen::VectorXd>(out, n) = h;
    });
}

rcd_status rcd_run_task(const rcd_space* space, const char* task_json, const char* options_json, rcd_result** out) {
    if (null_args({space, task_json, out})) return RCD_ERR_ARGUMENT;
    return guarded([&] {
        const Options o = parse_options(options_json);
        const json task = rcdlab::io::parse_json(task_json, "task");
        rcdlab::Tolerances tol;
        tol.overlay(o.run.tolerance_overrides);
        const std::uint64_t seed = o.run.seed.value_or(0);
        json effective = task;
        effective["seed"] = seed;
        effective["tolerances"] = tol.to_json();
        const rcdlab::Session session(space->ptr, seed, tol, o.run.threads, o.base_dir,
                                      rcdlab::io::config_hash(effective));
        const rcdlab::TaskArtifact a = rcdlab::run_task(task, session);
        auto r = std::make_unique<rcd_result>();
        r->json = rcdlab::io::dump(a.document);
        r->assertion_failed = a.assertion_failed;
        if (a.assertion_failed) r->failed_task = a.id;
        *out = r.release();
    });
}

rcd_status rcd_run_config(const char* config_text, const char* config_name, const char* base_dir,
                          const char* out_dir, const char* options_json, rcd_result** out) {
    if (null_args({config_text, out_dir, out})) return RCD_ERR_ARGUMENT;
    return guarded([&] {
        const Options o = parse_options(options_json);
        const json cfg = rcdlab::io::parse_json(config_text, config_name ? config_name : "config");
        const rcdlab::RunResult res = rcdlab::run_config(cfg, base_dir ? base_dir : "", out_dir, o.run);
        auto r = std::make_unique<rcd_result>();
        r->json = rcdlab::io::dump(res.summary);
        r->assertion_failed = res.assertion_failed;
        r->failed_task = res.failed_task;
        r->report_path = res.report_path.string();
        *out = r.release();
    });
}

const char* rcd_result_json(const rcd_result* result) { return result ? result->json.c_str() : ""; }
int rcd_result_assertion_failed(const rcd_result* result) { return result && result->assertion_failed ? 1 : 0; }
const char* rcd_result_failed_task(const rcd_result* result) { return result ? result->failed_task.c_str() : ""; }
const char* rcd_result_report_path(const rcd_result* result) { return result ? result->report_path.c_str() : ""; }

rcd_status rcd_result_write(const rcd_result* result, const char* path) {
    if (null_args({result, path})) return RCD_ERR_ARGUMENT;
    return guarded([&] { rcdlab::io::write_atomic(path, result->json); });
}

void rcd_result_free(rcd_result* result) { delete result; }

}  // extern "C"
