#include "config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mvlab/errors.hpp"

namespace mvlab::cli {

using nlohmann::json;

json default_config() {
    return json::parse(R"({
  "space": {"n_state": 2, "n_noise": 2, "viscosity": 0.05, "eigenvalues": [], "hs_weights": []},
  "grid": {"T": 1.0, "M": 64},
  "particles": 2000,
  "model": {
    "family": "linear_quadratic",
    "psi": [1.0, 0.5],
    "linear_quadratic": {
      "A1": [[-0.5, 0.2], [0.0, -0.3]],
      "abar": 0.4,
      "B": [[1.0], [0.5]],
      "S0": [[0.3, 0.0], [0.0, 0.3]],
      "R": [[[0.2, 0.0], [0.0, 0.2]]],
      "sigma_x": 0.2,
      "w_m": 0.1,
      "Q": [[1.0, 0.0], [0.0, 1.0]],
      "qbar": 0.5,
      "r": 0.5,
      "H": [[1.0, 0.0], [0.0, 1.0]],
      "hbar": 0.5,
      "c": [0.3, -0.2]
    },
    "scalar_interaction": {
      "kappa": 1.0, "alpha": 0.5, "alpha_x": 0.3,
      "B": [], "S0": [], "R": [],
      "v": 0.2, "rho": 0.0, "w": 0.1,
      "c_x": 1.0, "r_u": 0.1, "c_m": 0.5, "c_xm": 0.2, "c_h": 1.0, "c_hm": 0.5,
      "x_target": [], "m_target": 0.0
    },
    "custom_table": {"schedule_csv": "", "rows": [[0.0, 1.0, 1.0, 1.0]]},
    "probe": {"enabled": true, "bound": 1000.0, "radius": 3.0, "pairs": 1000, "seed": 17}
  },
  "control_set": {"type": "box", "lower": [-2.0], "upper": [2.0], "points": []},
  "initial": {"mean": [0.5, -0.3], "stddev": [0.4, 0.4]},
  "control": {"value": [0.3]},
  "spike": {"pert": [1.5], "offset": 0.25, "eps": [0.25, 0.125, 0.0625, 0.03125, 0.015625]},
  "seeds": [1],
  "execution": {"workers": 1},
  "output": "mvlab_out",
  "adjoint": {"max_iterations": 40, "tolerance": 1e-9, "regression_degree": 2, "ridge": 1e-8, "divergence_window": 3},
  "rates": {
    "bootstrap_replicates": 2000,
    "ci_level": 0.9,
    "bands": {"xi": [0.8, 1.2], "y": [0.8, 1.2], "z": [1.7, 2.3], "eta": [1.7, 2.3]},
    "zeta_min": 2.0
  },
  "adjoint_check": {
    "test_sources": 3, "test_pairs": 2, "source_seed": 11, "source_scale": 0.5,
    "max_relative": 0.05, "max_rmse": 0.05,
    "horizons": [0.125, 0.25, 0.5, 1.0], "max_factor": 0.5
  },
  "smp": {"N": 10000, "grid_points": 9, "se_multiplier": 3.0, "optimize_first": true},
  "expand": {"N": 20000, "antithetic": true},
  "optimize": {"iterations": 30, "relaxation": 1.0, "golden_iterations": 48, "tolerance": 1e-7},
  "lions": {"ensemble_size": 32, "fd_samples": 8, "fd_radius": 2.0, "tolerance": 1e-4, "order_low": 1.8, "order_high": 2.2}
})");
}

void override_seed(json& doc, std::uint64_t master) {
    std::size_t count = 1;
    if (doc.contains("seeds") && doc["seeds"].is_array() && !doc["seeds"].empty()) count = doc["seeds"].size();
    json seeds = json::array();
    for (std::size_t i = 0; i < count; ++i) seeds.push_back(master + i);
    doc["seeds"] = seeds;
}

namespace {

std::string join_path(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

std::string index_path(const std::string& parent, std::size_t i) { return parent + "[" + std::to_string(i) + "]"; }

// Overlays `user` onto `defaults`. Objects merge key by key and reject keys the defaults do
// not know; any other value replaces the default wholesale.
void merge(json& defaults, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string p = join_path(path, it.key());
        if (!defaults.contains(it.key())) throw ConfigError(p, "unknown key");
        json& slot = defaults[it.key()];
        if (slot.is_object())
            merge(slot, it.value(), p);
        else
            slot = it.value();
    }
}

class Reader {
public:
    explicit Reader(const json& root) : root_(root) {}

    const json& node(const std::string& path) const {
        const json* cur = &root_;
        std::size_t start = 0;
        while (start <= path.size()) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            cur = &cur->at(key);
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        return *cur;
    }

    double number(const std::string& path) const { return number_at(node(path), path); }

    static double number_at(const json& v, const std::string& path) {
        if (!v.is_number()) throw ConfigError(path, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
        return x;
    }

    long long integer(const std::string& path) const {
        const json& v = node(path);
        if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(path, "expected an integer");
        return v.get<long long>();
    }

    int positive_int(const std::string& path) const {
        const long long v = integer(path);
        if (v < 1) throw ConfigError(path, "must be a positive integer");
        if (v > 1'000'000'000) throw ConfigError(path, "is too large");
        return static_cast<int>(v);
    }

    double positive(const std::string& path) const {
        const double v = number(path);
        if (!(v > 0)) throw ConfigError(path, "must be positive");
        return v;
    }

    double nonnegative(const std::string& path) const {
        const double v = number(path);
        if (v < 0) throw ConfigError(path, "must be non-negative");
        return v;
    }

    bool boolean(const std::string& path) const {
        const json& v = node(path);
        if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& path) const {
        const json& v = node(path);
        if (!v.is_string()) throw ConfigError(path, "expected a string");
        return v.get<std::string>();
    }

    /// size < 0 accepts any length; allow_empty accepts [] regardless of size.
    Eigen::VectorXd vector(const std::string& path, int size = -1, bool allow_empty = false) const {
        return vector_at(node(path), path, size, allow_empty);
    }

    static Eigen::VectorXd vector_at(const json& v, const std::string& path, int size, bool allow_empty) {
        if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
        if (v.empty() && allow_empty) return {};
        if (size >= 0 && static_cast<int>(v.size()) != size)
            throw ConfigError(path, "expected " + std::to_string(size) + " entries, got " + std::to_string(v.size()));
        if (v.empty()) throw ConfigError(path, "must not be empty");
        Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = number_at(v[i], index_path(path, i));
        return out;
    }

    /// Row-major nested array with the given shape; [] yields an empty matrix when allowed.
    static Eigen::MatrixXd matrix_at(const json& v, const std::string& path, int rows, int cols, bool allow_empty) {
        if (!v.is_array()) throw ConfigError(path, "expected an array of rows");
        if (v.empty() && allow_empty) return {};
        if (static_cast<int>(v.size()) != rows)
            throw ConfigError(path, "expected " + std::to_string(rows) + " rows, got " + std::to_string(v.size()));
        Eigen::MatrixXd out(rows, cols);
        for (int r = 0; r < rows; ++r) out.row(r) = vector_at(v[static_cast<std::size_t>(r)], index_path(path, r), cols, false);
        return out;
    }

    Eigen::MatrixXd matrix(const std::string& path, int rows, int cols, bool allow_empty = false) const {
        return matrix_at(node(path), path, rows, cols, allow_empty);
    }

    std::vector<Eigen::MatrixXd> matrices(const std::string& path, int count, int rows, int cols) const {
        const json& v = node(path);
        if (!v.is_array()) throw ConfigError(path, "expected an array of matrices");
        if (v.empty()) return {};
        if (static_cast<int>(v.size()) != count)
            throw ConfigError(path, "expected " + std::to_string(count) + " matrices (one per control component), got " +
                                        std::to_string(v.size()));
        std::vector<Eigen::MatrixXd> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(matrix_at(v[i], index_path(path, i), rows, cols, false));
        return out;
    }

private:
    const json& root_;
};

ControlSet read_control_set(const Reader& r) {
    const std::string type = r.string("control_set.type");
    if (type == "box") {
        const Eigen::VectorXd lo = r.vector("control_set.lower");
        const Eigen::VectorXd hi = r.vector("control_set.upper", static_cast<int>(lo.size()));
        for (Eigen::Index i = 0; i < lo.size(); ++i)
            if (!(lo[i] <= hi[i])) throw ConfigError(index_path("control_set.upper", static_cast<std::size_t>(i)), "is below the lower bound");
        return ControlSet::box(lo, hi);
    }
    if (type == "finite") {
        const json& pts = r.node("control_set.points");
        if (!pts.is_array() || pts.empty()) throw ConfigError("control_set.points", "must list at least one point");
        std::vector<Control> points;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const int dim = points.empty() ? -1 : static_cast<int>(points.front().size());
            points.push_back(Reader::vector_at(pts[i], index_path("control_set.points", i), dim, false));
        }
        return ControlSet::finite_grid(points);
    }
    throw ConfigError("control_set.type", "must be \"box\" or \"finite\"");
}

LinearQuadraticParams read_lq(const Reader& r, int n, int d, int c) {
    const std::string p = "model.linear_quadratic.";
    LinearQuadraticParams q;
    q.A1 = r.matrix(p + "A1", n, n, true);
    q.abar = r.number(p + "abar");
    q.B = r.matrix(p + "B", n, c, true);
    q.S0 = r.matrix(p + "S0", n, d, true);
    q.R = r.matrices(p + "R", c, n, d);
    q.sigma_x = r.number(p + "sigma_x");
    q.w_m = r.number(p + "w_m");
    q.Q = r.matrix(p + "Q", n, n, true);
    q.qbar = r.number(p + "qbar");
    q.r = r.number(p + "r");
    q.H = r.matrix(p + "H", n, n, true);
    q.hbar = r.number(p + "hbar");
    q.c = r.vector(p + "c", n, true);
    return q;
}

ScalarInteractionParams read_tanh(const Reader& r, int n, int d, int c) {
    const std::string p = "model.scalar_interaction.";
    ScalarInteractionParams s;
    s.kappa = r.number(p + "kappa");
    s.alpha = r.number(p + "alpha");
    s.alpha_x = r.number(p + "alpha_x");
    s.B = r.matrix(p + "B", n, c, true);
    s.S0 = r.matrix(p + "S0", n, d, true);
    s.R = r.matrices(p + "R", c, n, d);
    s.v = r.number(p + "v");
    s.rho = r.number(p + "rho");
    s.w = r.number(p + "w");
    s.c_x = r.number(p + "c_x");
    s.r_u = r.number(p + "r_u");
    s.c_m = r.number(p + "c_m");
    s.c_xm = r.number(p + "c_xm");
    s.c_h = r.number(p + "c_h");
    s.c_hm = r.number(p + "c_hm");
    s.x_target = r.vector(p + "x_target", n, true);
    s.m_target = r.number(p + "m_target");
    return s;
}

TableSchedule read_schedule(const Reader& r, const std::filesystem::path& base_dir) {
    const std::string file = r.string("model.custom_table.schedule_csv");
    try {
        if (!file.empty()) {
            std::filesystem::path path(file);
            if (path.is_relative()) path = base_dir / path;
            return TableSchedule::from_csv_file(path.string());
        }
        const json& rows = r.node("model.custom_table.rows");
        if (!rows.is_array() || rows.empty()) throw ConfigError("model.custom_table.rows", "must list at least one row");
        std::ostringstream csv;
        csv.imbue(std::locale::classic());
        csv.precision(17);
        csv << "t,drift_scale,noise_scale,control_scale\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const Eigen::VectorXd row = Reader::vector_at(rows[i], index_path("model.custom_table.rows", i), 4, false);
            csv << row[0] << ',' << row[1] << ',' << row[2] << ',' << row[3] << '\n';
        }
        std::istringstream in(csv.str());
        return TableSchedule::from_csv(in);
    } catch (const mvlab::Error& e) {
        throw ConfigError(file.empty() ? "model.custom_table.rows" : "model.custom_table.schedule_csv", e.what());
    }
}

GalerkinSpace read_space(const Reader& r) {
    const int n = r.positive_int("space.n_state");
    const int d = r.positive_int("space.n_noise");
    const Eigen::VectorXd eig = r.vector("space.eigenvalues", n, true);
    const Eigen::VectorXd w = r.vector("space.hs_weights", d, true);
    try {
        if (eig.size() == 0 && w.size() == 0) return GalerkinSpace::dirichlet_laplacian(n, d, r.positive("space.viscosity"));
        if (eig.size() == 0) throw ConfigError("space.eigenvalues", "required when hs_weights are given");
        if (w.size() == 0) throw ConfigError("space.hs_weights", "required when eigenvalues are given");
        return GalerkinSpace(eig, w);
    } catch (const mvlab::Error& e) {
        throw ConfigError("space", e.what());
    }
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    cfg.effective = default_config();
    merge(cfg.effective, doc, "");
    cfg.base_dir = base_dir;
    const Reader r(cfg.effective);

    cfg.space = read_space(r);
    const int n = cfg.space.n_state();
    const int d = cfg.space.n_noise();
    const double T = r.positive("grid.T");
    cfg.grid = TimeGrid(T, r.positive_int("grid.M"));
    cfg.N = r.positive_int("particles");

    const ControlSet set = read_control_set(r);
    const int c = set.dim();
    cfg.family = r.string("model.family");
    const Eigen::VectorXd psi = r.vector("model.psi", n);
    ProbeSettings probe;
    probe.enabled = r.boolean("model.probe.enabled");
    probe.bound = r.positive("model.probe.bound");
    probe.radius = r.positive("model.probe.radius");
    probe.pairs = r.positive_int("model.probe.pairs");
    probe.seed = static_cast<std::uint64_t>(r.integer("model.probe.seed"));
    try {
        if (cfg.family == "linear_quadratic") {
            cfg.model = make_linear_quadratic(n, d, psi, set, read_lq(r, n, d, c), probe);
        } else if (cfg.family == "scalar_interaction") {
            cfg.model = make_scalar_interaction(n, d, psi, set, read_tanh(r, n, d, c), probe);
        } else if (cfg.family == "custom_table") {
            cfg.model = make_custom_table(n, d, psi, set, read_lq(r, n, d, c), read_schedule(r, base_dir), probe);
        } else {
            throw ConfigError("model.family", "must be linear_quadratic, scalar_interaction or custom_table");
        }
    } catch (const mvlab::Error& e) {
        throw ConfigError("model", e.what());
    }

    cfg.sampler.mean = r.vector("initial.mean", n);
    cfg.sampler.stddev = r.vector("initial.stddev", n);
    if ((cfg.sampler.stddev.array() < 0).any()) throw ConfigError("initial.stddev", "must be non-negative");

    cfg.ubar = r.vector("control.value", c);
    if (!set.contains(cfg.ubar)) throw ConfigError("control.value", "is not in the control set");
    cfg.pert = r.vector("spike.pert", c);
    if (!set.contains(cfg.pert)) throw ConfigError("spike.pert", "is not in the control set");
    cfg.offset = r.nonnegative("spike.offset");
    if (!(cfg.offset < T)) throw ConfigError("spike.offset", "must lie in [0, T)");
    const Eigen::VectorXd eps = r.vector("spike.eps");
    for (Eigen::Index i = 0; i < eps.size(); ++i) {
        const std::string p = index_path("spike.eps", static_cast<std::size_t>(i));
        if (!(eps[i] > 0)) throw ConfigError(p, "must be positive");
        if (eps[i] > T - cfg.offset + 1e-12) throw ConfigError(p, "window does not fit between spike.offset and T");
        const int steps = cfg.grid.steps_for(eps[i]);
        const double on_grid = steps * cfg.grid.dt();
        if (std::abs(on_grid - eps[i]) > 1e-9 * T) {
            std::ostringstream w;
            w << p << " = " << eps[i] << " is not a multiple of dt; the window covers " << steps << " steps (eps "
              << on_grid << ")";
            cfg.warnings.push_back(w.str());
        }
        cfg.eps.push_back(eps[i]);
    }

    const json& seeds = r.node("seeds");
    if (!seeds.is_array() || seeds.empty()) throw ConfigError("seeds", "must be a non-empty list");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!seeds[i].is_number_unsigned() && !(seeds[i].is_number_integer() && seeds[i].get<long long>() >= 0))
            throw ConfigError(index_path("seeds", i), "expected a non-negative integer");
        cfg.seeds.push_back(seeds[i].get<std::uint64_t>());
    }
    cfg.workers = r.positive_int("execution.workers");
    cfg.output = r.string("output");

    cfg.adjoint.max_iterations = r.positive_int("adjoint.max_iterations");
    cfg.adjoint.tolerance = r.positive("adjoint.tolerance");
    cfg.adjoint.regression_degree = static_cast<int>(r.integer("adjoint.regression_degree"));
    if (cfg.adjoint.regression_degree < 0 || cfg.adjoint.regression_degree > 4)
        throw ConfigError("adjoint.regression_degree", "must be between 0 and 4");
    cfg.adjoint.ridge = r.nonnegative("adjoint.ridge");
    cfg.adjoint.divergence_window = r.positive_int("adjoint.divergence_window");

    cfg.rates.bootstrap_replicates = r.positive_int("rates.bootstrap_replicates");
    cfg.rates.ci_level = r.positive("rates.ci_level");
    if (!(cfg.rates.ci_level < 1)) throw ConfigError("rates.ci_level", "must lie in (0, 1)");
    for (const char* name : {"xi", "y", "z", "eta"}) {
        const std::string p = std::string("rates.bands.") + name;
        const Eigen::VectorXd band = r.vector(p, 2);
        if (!(band[0] <= band[1])) throw ConfigError(p, "lower end exceeds upper end");
        cfg.rates.bands[name] = {band[0], band[1]};
    }
    cfg.rates.zeta_min = r.number("rates.zeta_min");

    auto& ac = cfg.adjoint_check;
    ac.test_sources = static_cast<int>(r.integer("adjoint_check.test_sources"));
    ac.test_pairs = static_cast<int>(r.integer("adjoint_check.test_pairs"));
    if (ac.test_sources < 0) throw ConfigError("adjoint_check.test_sources", "must be non-negative");
    if (ac.test_pairs < 0) throw ConfigError("adjoint_check.test_pairs", "must be non-negative");
    ac.source_seed = static_cast<std::uint64_t>(r.integer("adjoint_check.source_seed"));
    ac.source_scale = r.positive("adjoint_check.source_scale");
    ac.max_relative = r.positive("adjoint_check.max_relative");
    ac.max_rmse = r.positive("adjoint_check.max_rmse");
    const Eigen::VectorXd horizons = r.vector("adjoint_check.horizons");
    if (horizons.size() < 2) throw ConfigError("adjoint_check.horizons", "needs at least two horizons");
    for (Eigen::Index i = 0; i < horizons.size(); ++i) {
        if (!(horizons[i] > 0 && horizons[i] <= T + 1e-12))
            throw ConfigError(index_path("adjoint_check.horizons", static_cast<std::size_t>(i)), "must lie in (0, T]");
        ac.horizons.push_back(horizons[i]);
    }
    ac.max_factor = r.positive("adjoint_check.max_factor");

    cfg.smp.N = r.positive_int("smp.N");
    cfg.smp.grid_points = r.positive_int("smp.grid_points");
    cfg.smp.se_multiplier = r.nonnegative("smp.se_multiplier");
    cfg.smp.optimize_first = r.boolean("smp.optimize_first");

    cfg.expand.N = r.positive_int("expand.N");
    cfg.expand.antithetic = r.boolean("expand.antithetic");

    cfg.optimize.iterations = r.positive_int("optimize.iterations");
    cfg.optimize.relaxation = r.positive("optimize.relaxation");
    cfg.optimize.golden_iterations = r.positive_int("optimize.golden_iterations");
    cfg.optimize.tolerance = r.positive("optimize.tolerance");

    cfg.lions.ensemble_size = r.positive_int("lions.ensemble_size");
    cfg.lions.fd_samples = r.positive_int("lions.fd_samples");
    cfg.lions.fd_radius = r.positive("lions.fd_radius");
    cfg.lions.criteria.tolerance = r.positive("lions.tolerance");
    cfg.lions.criteria.order_low = r.number("lions.order_low");
    cfg.lions.criteria.order_high = r.number("lions.order_high");
    if (!(cfg.lions.criteria.order_low < cfg.lions.criteria.order_high))
        throw ConfigError("lions.order_high", "must exceed lions.order_low");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc, path.parent_path());
}

}  // namespace mvlab::cli
