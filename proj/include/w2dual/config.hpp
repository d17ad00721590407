#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "w2dual/common.hpp"
#include "w2dual/layers.hpp"
#include "w2dual/measures.hpp"
#include "w2dual/potentials.hpp"
#include "w2dual/trainer.hpp"

namespace w2dual {

// ---------------------------------------------------------------------------
// Flat key = value text format (dotted sections, '#' comments)
// ---------------------------------------------------------------------------

struct KvEntry {
    std::string key;
    std::string value;
    std::string origin;  // "<file>:<line>" for error anchoring
};

namespace detail {

inline std::string strip(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline std::vector<KvEntry> parse_kv_text(const std::string& text, const std::string& name) {
    std::vector<KvEntry> out;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        const std::string origin = name + ":" + std::to_string(lineno);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ": expected 'key = value', got '" + line + "'");
        KvEntry e;
        e.key = detail::strip(line.substr(0, eq));
        e.value = detail::strip(line.substr(eq + 1));
        e.origin = origin;
        if (e.key.empty()) throw ConfigError(origin + ": empty key");
        if (e.value.empty()) throw ConfigError(origin + ": empty value for '" + e.key + "'");
        out.push_back(std::move(e));
    }
    return out;
}

inline std::vector<KvEntry> parse_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_kv_text(buf.str(), path);
}

/// One `--set key=value` command-line override.
inline KvEntry parse_override(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size())
        throw ConfigError("override must look like key=value, got '" + spec + "'");
    return KvEntry{detail::strip(spec.substr(0, eq)), detail::strip(spec.substr(eq + 1)),
                   "override '" + spec + "'"};
}

namespace detail {

inline bool parse_bool(const KvEntry& e) {
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    throw ConfigError(e.origin + ": '" + e.key + "' expects true/false, got '" + e.value + "'");
}

inline double parse_double(const KvEntry& e) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(e.value, &used);
    } catch (const std::exception&) {
        throw ConfigError(e.origin + ": '" + e.key + "' expects a number, got '" + e.value + "'");
    }
    if (used != e.value.size())
        throw ConfigError(e.origin + ": trailing junk in number '" + e.value + "'");
    return v;
}

inline std::int64_t parse_int(const KvEntry& e) {
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
        v = std::stoll(e.value, &used);
    } catch (const std::exception&) {
        throw ConfigError(e.origin + ": '" + e.key + "' expects an integer, got '" + e.value +
                          "'");
    }
    if (used != e.value.size())
        throw ConfigError(e.origin + ": trailing junk in integer '" + e.value + "'");
    return v;
}

inline std::uint64_t parse_uint(const KvEntry& e) {
    const std::int64_t v = parse_int(e);
    if (v < 0) throw ConfigError(e.origin + ": '" + e.key + "' must be non-negative");
    return static_cast<std::uint64_t>(v);
}

inline std::vector<Eigen::Index> parse_hidden(const KvEntry& e) {
    std::vector<Eigen::Index> out;
    std::istringstream is(e.value);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        KvEntry sub{e.key, strip(tok), e.origin};
        const std::int64_t w = parse_int(sub);
        if (w < 1) throw ConfigError(e.origin + ": layer widths must be >= 1");
        out.push_back(static_cast<Eigen::Index>(w));
    }
    if (out.empty()) throw ConfigError(e.origin + ": '" + e.key + "' expects a width list");
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Resolved run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string task = "gauss_to_gauss_2d";
    std::uint64_t seed = 0;
    int trials = 3;
    std::string output_dir = "w2dual_out";

    std::string potential_kind = "icnn";
    std::vector<Eigen::Index> potential_hidden = {64, 64};
    std::string potential_act = "elu";
    bool potential_actnorm = true;

    std::string amortizer_kind = "init_nn";
    std::vector<Eigen::Index> amortizer_hidden = {64, 64};
    std::string amortizer_act = "elu";

    TrainConfig train{};

    void apply(const KvEntry& e) {
        const std::string& k = e.key;
        if (k == "task") task = e.value;
        else if (k == "seed") seed = detail::parse_uint(e);
        else if (k == "trials") trials = static_cast<int>(detail::parse_int(e));
        else if (k == "output_dir") output_dir = e.value;
        else if (k == "potential.kind") potential_kind = e.value;
        else if (k == "potential.hidden") potential_hidden = detail::parse_hidden(e);
        else if (k == "potential.act") potential_act = e.value;
        else if (k == "potential.actnorm") potential_actnorm = detail::parse_bool(e);
        else if (k == "amortizer.kind") amortizer_kind = e.value;
        else if (k == "amortizer.hidden") amortizer_hidden = detail::parse_hidden(e);
        else if (k == "amortizer.act") amortizer_act = e.value;
        else if (k == "amortization.loss") {
            try {
                train.loss = parse_amort_loss(e.value);
            } catch (const ConfigError& err) {
                throw ConfigError(e.origin + ": " + err.what());
            }
        } else if (k == "amortization.connect_potential")
            train.connect_potential = detail::parse_bool(e);
        else if (k == "conjugate.solver") {
            try {
                train.conjugate.method = parse_conjugate_method(e.value);
            } catch (const ConfigError& err) {
                throw ConfigError(e.origin + ": " + err.what());
            }
        } else if (k == "conjugate.linesearch") {
            try {
                train.conjugate.linesearch.method = parse_linesearch(e.value);
            } catch (const ConfigError& err) {
                throw ConfigError(e.origin + ": " + err.what());
            }
        } else if (k == "conjugate.stop") {
            try {
                train.conjugate.stop = parse_stop_rule(e.value);
            } catch (const ConfigError& err) {
                throw ConfigError(e.origin + ": " + err.what());
            }
        } else if (k == "conjugate.tol") train.conjugate.tol = detail::parse_double(e);
        else if (k == "conjugate.grad_tol") train.conjugate.grad_tol = detail::parse_double(e);
        else if (k == "conjugate.max_iter")
            train.conjugate.max_iter = static_cast<int>(detail::parse_int(e));
        else if (k == "conjugate.memory")
            train.conjugate.memory = static_cast<int>(detail::parse_int(e));
        else if (k == "conjugate.c1") train.conjugate.linesearch.c1 = detail::parse_double(e);
        else if (k == "conjugate.c2") train.conjugate.linesearch.c2 = detail::parse_double(e);
        else if (k == "conjugate.tau") train.conjugate.linesearch.tau = detail::parse_double(e);
        else if (k == "conjugate.num_candidates")
            train.conjugate.linesearch.num_candidates =
                static_cast<int>(detail::parse_int(e));
        else if (k == "conjugate.alpha_init")
            train.conjugate.linesearch.alpha_init = detail::parse_double(e);
        else if (k == "conjugate.adam_beta1") train.conjugate.adam_beta1 = detail::parse_double(e);
        else if (k == "conjugate.adam_beta2") train.conjugate.adam_beta2 = detail::parse_double(e);
        else if (k == "conjugate.adam_lr_init")
            train.conjugate.adam_lr_init = detail::parse_double(e);
        else if (k == "conjugate.adam_lr_final")
            train.conjugate.adam_lr_final = detail::parse_double(e);
        else if (k == "train.n_iters") train.n_iters = detail::parse_int(e);
        else if (k == "train.batch_size")
            train.batch_size = static_cast<Eigen::Index>(detail::parse_int(e));
        else if (k == "train.lr_init") train.lr_init = detail::parse_double(e);
        else if (k == "train.beta1") train.beta1 = detail::parse_double(e);
        else if (k == "train.beta2") train.beta2 = detail::parse_double(e);
        else if (k == "train.cosine_floor") train.cosine_floor = detail::parse_double(e);
        else if (k == "train.swap_direction") train.swap_direction = detail::parse_bool(e);
        else if (k == "train.eval_every") train.eval_every = detail::parse_int(e);
        else if (k == "train.eval_samples")
            train.eval_samples = static_cast<Eigen::Index>(detail::parse_int(e));
        else if (k == "train.final_eval_samples")
            train.final_eval_samples = static_cast<Eigen::Index>(detail::parse_int(e));
        else if (k == "train.checkpoint_every") train.checkpoint_every = detail::parse_int(e);
        else if (k == "train.pretrain") train.pretrain = detail::parse_bool(e);
        else if (k == "pretrain.n_iters") train.pretrain_cfg.n_iters = detail::parse_int(e);
        else if (k == "pretrain.batch")
            train.pretrain_cfg.batch = static_cast<Eigen::Index>(detail::parse_int(e));
        else if (k == "pretrain.lr") train.pretrain_cfg.lr = detail::parse_double(e);
        else if (k == "pretrain.target") train.pretrain_cfg.target = detail::parse_double(e);
        else
            throw ConfigError(e.origin + ": unknown config key '" + k + "'");
    }

    static RunConfig from_entries(const std::vector<KvEntry>& entries) {
        RunConfig cfg;
        for (const auto& e : entries) cfg.apply(e);
        return cfg;
    }

    void validate() const {
        if (trials < 1) throw ConfigError("trials must be >= 1");
        train.validate();  // includes the regression-needs-solver rejection
        ActFn::parse(potential_act);
        ActFn::parse(amortizer_act);
        find_task(task);  // throws for unknown task names
        // Factories throw for unknown kinds; probe with tiny nets.
        make_potential(potential_kind, 2, {2}, ActFn::parse(potential_act), potential_actnorm);
        make_amortizer(amortizer_kind, 2, {2}, ActFn::parse(amortizer_act));
    }

    std::shared_ptr<PotentialModel> build_potential(Eigen::Index dim) const {
        return make_potential(potential_kind, dim, potential_hidden, ActFn::parse(potential_act),
                              potential_actnorm);
    }

    std::shared_ptr<AmortModel> build_amortizer(Eigen::Index dim) const {
        return make_amortizer(amortizer_kind, dim, amortizer_hidden,
                              ActFn::parse(amortizer_act));
    }

    /// Serializes every resolved setting; parsing the output reproduces this
    /// config exactly (doubles are printed round-trip precise).
    void write(std::ostream& os) const {
        os << std::setprecision(17);
        os << "task = " << task << '\n';
        os << "seed = " << seed << '\n';
        os << "trials = " << trials << '\n';
        os << "output_dir = " << output_dir << '\n';
        os << "potential.kind = " << potential_kind << '\n';
        os << "potential.hidden = " << join(potential_hidden) << '\n';
        os << "potential.act = " << potential_act << '\n';
        os << "potential.actnorm = " << (potential_actnorm ? "true" : "false") << '\n';
        os << "amortizer.kind = " << amortizer_kind << '\n';
        os << "amortizer.hidden = " << join(amortizer_hidden) << '\n';
        os << "amortizer.act = " << amortizer_act << '\n';
        os << "amortization.loss = " << amort_loss_name(train.loss) << '\n';
        os << "amortization.connect_potential = " << (train.connect_potential ? "true" : "false")
           << '\n';
        os << "conjugate.solver = " << conjugate_method_name(train.conjugate.method) << '\n';
        os << "conjugate.linesearch = " << linesearch_name(train.conjugate.linesearch.method)
           << '\n';
        os << "conjugate.stop = "
           << (train.conjugate.stop == StopRule::change ? "change" : "grad_norm") << '\n';
        os << "conjugate.tol = " << train.conjugate.tol << '\n';
        os << "conjugate.grad_tol = " << train.conjugate.grad_tol << '\n';
        os << "conjugate.max_iter = " << train.conjugate.max_iter << '\n';
        os << "conjugate.memory = " << train.conjugate.memory << '\n';
        os << "conjugate.c1 = " << train.conjugate.linesearch.c1 << '\n';
        os << "conjugate.c2 = " << train.conjugate.linesearch.c2 << '\n';
        os << "conjugate.tau = " << train.conjugate.linesearch.tau << '\n';
        os << "conjugate.num_candidates = " << train.conjugate.linesearch.num_candidates << '\n';
        os << "conjugate.alpha_init = " << train.conjugate.linesearch.alpha_init << '\n';
        os << "conjugate.adam_beta1 = " << train.conjugate.adam_beta1 << '\n';
        os << "conjugate.adam_beta2 = " << train.conjugate.adam_beta2 << '\n';
        os << "conjugate.adam_lr_init = " << train.conjugate.adam_lr_init << '\n';
        os << "conjugate.adam_lr_final = " << train.conjugate.adam_lr_final << '\n';
        os << "train.n_iters = " << train.n_iters << '\n';
        os << "train.batch_size = " << train.batch_size << '\n';
        os << "train.lr_init = " << train.lr_init << '\n';
        os << "train.beta1 = " << train.beta1 << '\n';
        os << "train.beta2 = " << train.beta2 << '\n';
        os << "train.cosine_floor = " << train.cosine_floor << '\n';
        os << "train.swap_direction = " << (train.swap_direction ? "true" : "false") << '\n';
        os << "train.eval_every = " << train.eval_every << '\n';
        os << "train.eval_samples = " << train.eval_samples << '\n';
        os << "train.final_eval_samples = " << train.final_eval_samples << '\n';
        os << "train.checkpoint_every = " << train.checkpoint_every << '\n';
        os << "train.pretrain = " << (train.pretrain ? "true" : "false") << '\n';
        os << "pretrain.n_iters = " << train.pretrain_cfg.n_iters << '\n';
        os << "pretrain.batch = " << train.pretrain_cfg.batch << '\n';
        os << "pretrain.lr = " << train.pretrain_cfg.lr << '\n';
        os << "pretrain.target = " << train.pretrain_cfg.target << '\n';
    }

    std::string to_text() const {
        std::ostringstream os;
        write(os);
        return os.str();
    }

private:
    static std::string join(const std::vector<Eigen::Index>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    }
};

}  // namespace w2dual
