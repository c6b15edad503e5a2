#include "mvlab/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "mvlab/errors.hpp"

namespace mvlab {

TimeGrid::TimeGrid(double T, int M) : T_(T), M_(M) {
    if (!(T > 0.0) || !std::isfinite(T)) throw DomainError("horizon T must be positive and finite");
    if (M < 1) throw DomainError("number of steps M must be >= 1");
}

int TimeGrid::steps_for(double duration) const {
    return static_cast<int>(std::ceil(duration / dt() - 1e-9));
}

ControlPath::ControlPath(int M, int N, int dim) {
    if (M < 1 || N < 1 || dim < 1) throw StructuralError("control path needs M, N, dim >= 1");
    values_.assign(static_cast<std::size_t>(M), Eigen::MatrixXd::Zero(dim, N));
}

ControlPath ControlPath::constant(int M, int N, const Control& u) {
    ControlPath path(M, N, static_cast<int>(u.size()));
    for (int k = 0; k < M; ++k) path.set_step(k, u);
    return path;
}

ControlPath ControlPath::common(const std::vector<Control>& per_step, int N) {
    if (per_step.empty()) throw StructuralError("common control needs at least one step");
    ControlPath path(static_cast<int>(per_step.size()), N, static_cast<int>(per_step.front().size()));
    for (std::size_t k = 0; k < per_step.size(); ++k) path.set_step(static_cast<int>(k), per_step[k]);
    return path;
}

void ControlPath::set_step(int k, const Control& u) {
    auto& block = values_[static_cast<std::size_t>(k)];
    if (u.size() != block.rows()) throw StructuralError("control dimension mismatch");
    block.colwise() = u;
}

bool ControlPath::is_common() const {
    for (const auto& block : values_)
        for (Eigen::Index i = 1; i < block.cols(); ++i)
            if (block.col(i) != block.col(0)) return false;
    return true;
}

std::vector<Control> ControlPath::common_values() const {
    std::vector<Control> out;
    out.reserve(values_.size());
    for (const auto& block : values_) out.push_back(block.col(0));
    return out;
}

std::vector<char> ControlPath::spike_mask() const {
    std::vector<char> mask(values_.size(), 0);
    if (spike_)
        for (int k : spike_->steps) mask[static_cast<std::size_t>(k)] = 1;
    return mask;
}

void ControlPath::validate(const ControlSet& set) const {
    for (std::size_t k = 0; k < values_.size(); ++k) {
        const auto& block = values_[k];
        if (block.rows() != set.dim()) throw StructuralError("control dimension does not match U");
        for (Eigen::Index i = 0; i < block.cols(); ++i) {
            // Consecutive particles usually share a value; skip repeated checks.
            if (i > 0 && block.col(i) == block.col(i - 1)) continue;
            if (!set.contains(block.col(i), 1e-12))
                throw DomainError("control at step " + std::to_string(k) + ", particle " + std::to_string(i) +
                                  " is not in U");
        }
    }
}

ControlPath make_spike_control_steps(const ControlPath& base, const Control& pert, std::vector<int> steps,
                                     const TimeGrid& grid, const ControlSet& set) {
    if (!set.contains(pert)) throw DomainError("spike perturbation is not in U");
    if (base.steps() != grid.M()) throw StructuralError("base control does not match the grid");
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    for (int k : steps)
        if (k < 0 || k >= grid.M()) throw DomainError("spike step " + std::to_string(k) + " outside the grid");
    ControlPath out = base;
    SpikeInfo info;
    for (int k : steps) {
        out.set_step(k, pert);
        info.pert.push_back(pert);
    }
    info.steps = std::move(steps);
    info.eps_grid = static_cast<double>(info.steps.size()) * grid.dt();
    info.eps_requested = info.eps_grid;
    out.set_spike(std::move(info));
    return out;
}

ControlPath make_spike_control(const ControlPath& base, const Control& pert, double eps, double offset,
                               const TimeGrid& grid, const ControlSet& set) {
    if (!(eps > 0.0) || eps > grid.T() + 1e-12) throw DomainError("spike length must lie in (0, T]");
    if (!(offset >= 0.0)) throw DomainError("spike offset must be >= 0");
    const int count = grid.steps_for(eps);
    const int start = static_cast<int>(std::floor(offset / grid.dt() + 1e-9));
    if (start + count > grid.M()) throw DomainError("spike window [offset, offset + eps] exceeds the horizon");
    std::vector<int> steps(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) steps[static_cast<std::size_t>(j)] = start + j;
    ControlPath out = make_spike_control_steps(base, pert, std::move(steps), grid, set);
    SpikeInfo info = *out.spike();
    info.eps_requested = eps;
    out.set_spike(std::move(info));
    return out;
}

std::shared_ptr<const NoiseRecord> generate_noise(const GalerkinSpace& space, const TimeGrid& grid, int N,
                                                  std::uint64_t seed, const Execution& exec) {
    if (N < 1) throw StructuralError("N must be >= 1");
    auto rec = std::make_shared<NoiseRecord>();
    const int d = space.n_noise();
    rec->dw.assign(static_cast<std::size_t>(grid.M()), Eigen::MatrixXd(d, N));
    const Eigen::ArrayXd scale = (space.hs_weights() * grid.dt()).array().sqrt();
    parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (int k = 0; k < grid.M(); ++k) {
                RngStream stream(seed, StreamPurpose::noise, i, static_cast<std::uint64_t>(k));
                auto col = rec->dw[static_cast<std::size_t>(k)].col(static_cast<Eigen::Index>(i));
                for (int j = 0; j < d; ++j) col[j] = scale[j] * stream.normal();
            }
        }
    });
    return rec;
}

std::shared_ptr<const NoiseRecord> coarsen_noise(const NoiseRecord& fine, int factor) {
    if (factor < 1 || fine.steps() % factor != 0) throw DomainError("coarsening factor must divide the step count");
    auto rec = std::make_shared<NoiseRecord>();
    for (int k = 0; k < fine.steps(); k += factor) {
        Eigen::MatrixXd sum = fine.dw[static_cast<std::size_t>(k)];
        for (int j = 1; j < factor; ++j) sum += fine.dw[static_cast<std::size_t>(k + j)];
        rec->dw.push_back(std::move(sum));
    }
    return rec;
}

std::shared_ptr<const NoiseRecord> flip_noise(const NoiseRecord& base, const std::vector<int>& steps) {
    auto rec = std::make_shared<NoiseRecord>(base);
    for (int k : steps) {
        if (k < 0 || k >= rec->steps()) throw DomainError("flip step outside the noise record");
        rec->dw[static_cast<std::size_t>(k)] *= -1.0;
    }
    return rec;
}

Eigen::MatrixXd InitialSampler::sample(int N, std::uint64_t seed) const {
    if (N < 1) throw StructuralError("N must be >= 1");
    if (stddev.size() != mean.size()) throw StructuralError("initial mean and stddev dimensions differ");
    if ((stddev.array() < 0).any()) throw DomainError("initial stddev must be >= 0");
    Eigen::MatrixXd x(mean.size(), N);
    for (int i = 0; i < N; ++i) {
        RngStream stream(seed, StreamPurpose::initial, static_cast<std::uint64_t>(i));
        for (Eigen::Index k = 0; k < mean.size(); ++k) x(k, i) = mean[k] + stddev[k] * stream.normal();
    }
    return x;
}

StatePath simulate(const CoefficientModel& model, const GalerkinSpace& space, const TimeGrid& grid,
                   const ControlPath& control, int N, const InitialSampler& sampler, const SimulationOptions& options) {
    const int n = space.n_state();
    const int d = space.n_noise();
    if (model.n_state() != n || model.n_noise() != d) throw StructuralError("model and space dimensions differ");
    if (sampler.mean.size() != n) throw StructuralError("initial sampler dimension differs from n_state");
    if (control.steps() != grid.M() || control.particles() != N)
        throw StructuralError("control path must be M x N");
    if (!options.feedback) control.validate(model.control_set());

    StatePath path;
    path.grid = grid;
    path.noise = options.noise ? options.noise : generate_noise(space, grid, N, options.seed, options.exec);
    if (path.noise->steps() != grid.M() || path.noise->dw.front().cols() != N || path.noise->dw.front().rows() != d)
        throw StructuralError("noise record does not match grid, N and n_noise");
    path.x.resize(static_cast<std::size_t>(grid.M()) + 1);
    path.m.resize(static_cast<std::size_t>(grid.M()) + 1);
    path.x[0] = sampler.sample(N, options.seed);
    path.controls = control;

    const Eigen::ArrayXd decay = space.semigroup_factors(grid.dt()).array();
    const double dt = grid.dt();
    for (int k = 0; k < grid.M(); ++k) {
        const auto& xk = path.x[static_cast<std::size_t>(k)];
        const double m = empirical_mean_statistic(ParticleEnsemble(xk), model.psi());
        path.m[static_cast<std::size_t>(k)] = m;
        Eigen::MatrixXd next(n, N);
        const Eigen::MatrixXd& dw = path.noise->dw[static_cast<std::size_t>(k)];
        std::vector<int> bad(static_cast<std::size_t>(N), 0);
        const double t = grid.t(k);
        parallel_for(static_cast<std::size_t>(N), options.exec, [&](std::size_t begin, std::size_t end) {
            Partials pa, pb;
            Control u;
            for (std::size_t ii = begin; ii < end; ++ii) {
                const auto i = static_cast<int>(ii);
                if (options.feedback) {
                    u = options.feedback(k, i, xk.col(i), m);
                    if (!model.control_set().contains(u, 1e-12))
                        throw DomainError("feedback control at step " + std::to_string(k) + " is not in U");
                    path.controls.set(k, i, u);
                } else {
                    u = control.at(k, i);
                }
                model.partials(Coef::a, t, xk.col(i), m, u, 0, pa);
                model.partials(Coef::b, t, xk.col(i), m, u, 0, pb);
                Eigen::VectorXd inc = xk.col(i) + pa.value * dt;
                inc.noalias() += as_hs(pb.value, n, d) * dw.col(i);
                next.col(i) = (decay * inc.array()).matrix();
                if (!next.col(i).allFinite()) bad[ii] = 1;
            }
        });
        for (int i = 0; i < N; ++i)
            if (bad[static_cast<std::size_t>(i)]) throw SimulationFault(k + 1, i, "non-finite state");
        path.x[static_cast<std::size_t>(k) + 1] = std::move(next);
    }
    path.m[static_cast<std::size_t>(grid.M())] =
        empirical_mean_statistic(ParticleEnsemble(path.x.back()), model.psi());
    return path;
}

std::vector<double> particle_costs(const CoefficientModel& model, const StatePath& path, const ControlPath& control,
                                   const Execution& exec) {
    const int M = path.grid.M();
    const int N = path.particles();
    if (control.steps() != M || control.particles() != N) throw StructuralError("control path does not match the state path");
    std::vector<double> out(static_cast<std::size_t>(N));
    const double dt = path.grid.dt();
    parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
        Partials p;
        for (std::size_t ii = begin; ii < end; ++ii) {
            const auto i = static_cast<int>(ii);
            double s = 0.0;
            for (int k = 0; k < M; ++k) {
                model.partials(Coef::f, path.grid.t(k), path.x[static_cast<std::size_t>(k)].col(i),
                               path.m[static_cast<std::size_t>(k)], control.at(k, i), 0, p);
                s += p.value[0] * dt;
            }
            model.partials(Coef::h, path.grid.T(), path.x.back().col(i), path.m.back(), Control(), 0, p);
            out[ii] = s + p.value[0];
        }
    });
    return out;
}

double cost(const CoefficientModel& model, const StatePath& path, const ControlPath& control, const Execution& exec) {
    const auto per = particle_costs(model, path, control, exec);
    double s = 0.0;
    for (double c : per) s += c;
    return s / static_cast<double>(per.size());
}

void write_path_csv(const StatePath& path, std::ostream& out) {
    out << "step,t,particle";
    for (int k = 0; k < path.dim(); ++k) out << ",x" << k;
    out << '\n';
    out.precision(17);
    for (std::size_t k = 0; k < path.x.size(); ++k) {
        for (int i = 0; i < path.particles(); ++i) {
            out << k << ',' << path.grid.t(static_cast<int>(k)) << ',' << i;
            for (int c = 0; c < path.dim(); ++c) out << ',' << path.x[k](c, i);
            out << '\n';
        }
    }
}

std::vector<StepMoments> path_moments(const StatePath& path) {
    std::vector<StepMoments> out;
    for (std::size_t k = 0; k < path.x.size(); ++k) {
        const ParticleEnsemble e(path.x[k]);
        out.push_back({path.grid.t(static_cast<int>(k)), path.m[k], e.mean(), e.second_moment()});
    }
    return out;
}

}  // namespace mvlab
