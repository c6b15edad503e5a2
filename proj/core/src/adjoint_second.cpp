#include <algorithm>
#include <cmath>
#include <sstream>

#include "mvlab/adjoint.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/regression.hpp"

namespace mvlab {

const char* to_string(SecondAdjointMethod method) {
    switch (method) {
        case SecondAdjointMethod::deterministic_lyapunov: return "deterministic_lyapunov";
        case SecondAdjointMethod::regression: return "regression";
    }
    return "unknown";
}

Eigen::MatrixXd SecondAdjointPath::matrix(const std::vector<Eigen::MatrixXd>& blocks, int k, int i) const {
    const Eigen::MatrixXd& b = blocks[static_cast<std::size_t>(k)];
    const Eigen::Index col = b.cols() == 1 ? 0 : i;
    return Eigen::Map<const Eigen::MatrixXd>(b.col(col).data(), n, n);
}

Eigen::MatrixXd SecondAdjointPath::block_matrix(const std::vector<Eigen::MatrixXd>& blocks, int k, int j, int i) const {
    const Eigen::MatrixXd& b = blocks[static_cast<std::size_t>(k)];
    const Eigen::Index col = b.cols() == 1 ? 0 : i;
    return Eigen::Map<const Eigen::MatrixXd>(b.col(col).data() + static_cast<Eigen::Index>(j) * n * n, n, n);
}

Eigen::MatrixXd SecondAdjointPath::Q_at(int k, int j, int i) const {
    if (Q.empty()) return Eigen::MatrixXd::Zero(n, n);
    return block_matrix(Q, k, j, i);
}

namespace {

struct StepCoefficients {
    Eigen::MatrixXd J;    // n^2 x N
    Eigen::MatrixXd K;    // d n^2 x N
    Eigen::MatrixXd hxx;  // n^2 x N
};

StepCoefficients step_coefficients(const CoefficientModel& model, const GalerkinSpace& space, const StatePath& base,
                                   const ControlPath& ubar, const FirstAdjointPath& first, int k,
                                   const Execution& exec) {
    const int n = space.n_state();
    const int d = space.n_noise();
    const int N = base.particles();
    const auto ks = static_cast<std::size_t>(k);
    const double t = base.grid.t(k);
    const double m = base.m[ks];
    const auto& w = space.hs_weights();
    const int nn = n * n;

    StepCoefficients out{Eigen::MatrixXd(nn, N), Eigen::MatrixXd(d * nn, N), Eigen::MatrixXd(nn, N)};
    Eigen::MatrixXd bm(n * d, N);
    parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
        Partials pa, pb, pf;
        Eigen::MatrixXd h(n, n);
        for (std::size_t ii = begin; ii < end; ++ii) {
            const auto i = static_cast<Eigen::Index>(ii);
            const auto x = base.x[ks].col(i);
            const Control u = ubar.at(k, static_cast<int>(i));
            model.partials(Coef::a, t, x, m, u, 2, pa);
            model.partials(Coef::b, t, x, m, u, 2, pb);
            model.partials(Coef::f, t, x, m, u, 2, pf);
            Eigen::Map<Eigen::MatrixXd>(out.J.col(i).data(), n, n) = pa.dx;
            for (int j = 0; j < d; ++j)
                Eigen::Map<Eigen::MatrixXd>(out.K.col(i).data() + j * nn, n, n) = pb.dx.middleRows(n * j, n);
            bm.col(i) = pb.dm;
            h = -pf.dxx[0];
            const auto ph = first.p_pred[ks].col(i);
            const auto qi = first.q[ks].col(i);
            for (int o = 0; o < n; ++o) h += ph[o] * pa.dxx[static_cast<std::size_t>(o)];
            for (int r = 0; r < n * d; ++r) h += w[r / n] * qi[r] * pb.dxx[static_cast<std::size_t>(r)];
            Eigen::Map<Eigen::MatrixXd>(out.hxx.col(i).data(), n, n) = h;
        }
    });
    // mean(b_m) psi' completes K_j; for scalar interaction every placement of the adjoint agrees.
    const Eigen::VectorXd mean_bm = bm.rowwise().mean();
    const Eigen::VectorXd& psi = model.psi();
    for (int j = 0; j < d; ++j) {
        const Eigen::MatrixXd outer = mean_bm.segment(n * j, n) * psi.transpose();
        const Eigen::Map<const Eigen::VectorXd> flat(outer.data(), nn);
        out.K.middleRows(j * nn, nn).colwise() += flat;
    }
    return out;
}

bool columns_agree(const Eigen::MatrixXd& m) {
    const double scale = 1.0 + m.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 1; i < m.cols(); ++i)
        if ((m.col(i) - m.col(0)).cwiseAbs().maxCoeff() > 1e-10 * scale) return false;
    return true;
}

Eigen::MatrixXd terminal_blocks(const CoefficientModel& model, const StatePath& base, const Execution& exec) {
    const int n = base.dim();
    const int N = base.particles();
    const double m = base.m.back();
    Eigen::MatrixXd out(n * n, N);
    const Control none;
    parallel_for(static_cast<std::size_t>(N), exec, [&](std::size_t begin, std::size_t end) {
        Partials ph;
        for (std::size_t i = begin; i < end; ++i) {
            model.partials(Coef::h, base.grid.T(), base.x.back().col(static_cast<Eigen::Index>(i)), m, none, 2, ph);
            Eigen::Map<Eigen::MatrixXd>(out.col(static_cast<Eigen::Index>(i)).data(), n, n) = -ph.dxx[0];
        }
    });
    return out;
}

/// P_k for one particle from G, the Q_j and the step coefficients; returns the asymmetry.
double assemble(const Eigen::MatrixXd& G, const std::vector<Eigen::MatrixXd>& Qj, const Eigen::MatrixXd& J,
                const std::vector<Eigen::MatrixXd>& K, const Eigen::MatrixXd& hxx, const Eigen::VectorXd& w, double dt,
                Eigen::MatrixXd& P) {
    const Eigen::Index n = G.rows();
    const Eigen::MatrixXd T = Eigen::MatrixXd::Identity(n, n) + dt * J;
    P.noalias() = T.transpose() * G * T;
    Eigen::MatrixXd extra = hxx;
    for (std::size_t j = 0; j < K.size(); ++j) {
        Eigen::MatrixXd term = K[j].transpose() * G * K[j];
        if (!Qj.empty()) term += K[j].transpose() * Qj[j] + Qj[j] * K[j];
        extra += w[static_cast<Eigen::Index>(j)] * term;
    }
    P += dt * extra;
    const double asym = (P - P.transpose()).cwiseAbs().maxCoeff();
    P = 0.5 * (P + P.transpose()).eval();
    return asym;
}

void note_asymmetry(SecondAdjointPath& out, int k, double asym) {
    out.max_asymmetry = std::max(out.max_asymmetry, asym);
    if (asym > 1e-8) {
        std::ostringstream msg;
        msg << "step " << k << ": asymmetry " << asym << " before symmetrisation";
        out.warnings.push_back(msg.str());
    }
}

}  // namespace

SecondAdjointPath solve_second_adjoint(const CoefficientModel& model, const GalerkinSpace& space,
                                       const StatePath& base, const ControlPath& ubar, const FirstAdjointPath& first,
                                       SecondAdjointMethod method, const AdjointOptions& options) {
    const int n = space.n_state();
    const int d = space.n_noise();
    const int N = base.particles();
    const int M = base.grid.M();
    const int nn = n * n;
    if (!base.noise) throw StructuralError("second adjoint needs the noise record of the base path");
    if (first.steps() != M || first.p_pred.front().cols() != N)
        throw StructuralError("first adjoint does not match the base path");
    const double dt = base.grid.dt();
    const Eigen::VectorXd& w = space.hs_weights();
    const Eigen::VectorXd decay = space.semigroup_factors(dt);
    const auto Sd = decay.asDiagonal();
    const bool det = method == SecondAdjointMethod::deterministic_lyapunov;

    SecondAdjointPath out;
    out.method = method;
    out.n = n;
    out.d = d;
    out.dt = dt;
    out.P.resize(static_cast<std::size_t>(M) + 1);
    out.P_pred.resize(static_cast<std::size_t>(M));
    out.hxx.resize(static_cast<std::size_t>(M));
    out.J.resize(static_cast<std::size_t>(M));
    out.K.resize(static_cast<std::size_t>(M));
    if (!det) out.Q.resize(static_cast<std::size_t>(M));

    Eigen::MatrixXd terminal = terminal_blocks(model, base, options.exec);
    if (det) {
        if (!columns_agree(terminal))
            throw UnsupportedError("deterministic_lyapunov needs a state-independent terminal Hessian");
        terminal = terminal.col(0).eval();
    }
    out.P.back() = terminal;

    auto unflatten = [&](const Eigen::MatrixXd& blocks, Eigen::Index col, int offset) {
        return Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(blocks.col(col).data() + offset, n, n));
    };

    for (int k = M - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        StepCoefficients coef = step_coefficients(model, space, base, ubar, first, k, options.exec);
        if (det) {
            if (!columns_agree(coef.J) || !columns_agree(coef.K) || !columns_agree(coef.hxx))
                throw UnsupportedError("deterministic_lyapunov needs particle-independent a_x, b_x and H_xx (step " +
                                       std::to_string(k) + ")");
            out.J[ks] = coef.J.col(0);
            out.K[ks] = coef.K.col(0);
            out.hxx[ks] = coef.hxx.col(0);
            const Eigen::MatrixXd G = Sd * unflatten(out.P[ks + 1], 0, 0) * Sd;
            std::vector<Eigen::MatrixXd> K;
            for (int j = 0; j < d; ++j) K.push_back(unflatten(out.K[ks], 0, j * nn));
            Eigen::MatrixXd P;
            const double asym = assemble(G, {}, unflatten(out.J[ks], 0, 0), K, unflatten(out.hxx[ks], 0, 0), w, dt, P);
            note_asymmetry(out, k, asym);
            out.P_pred[ks] = Eigen::Map<const Eigen::VectorXd>(G.data(), nn);
            out.P[ks] = Eigen::Map<const Eigen::VectorXd>(P.data(), nn);
            continue;
        }

        out.J[ks] = std::move(coef.J);
        out.K[ks] = std::move(coef.K);
        out.hxx[ks] = std::move(coef.hxx);
        Eigen::MatrixXd target(nn, N);
        for (int i = 0; i < N; ++i) {
            const Eigen::MatrixXd G = Sd * unflatten(out.P[ks + 1], i, 0) * Sd;
            target.col(i) = Eigen::Map<const Eigen::VectorXd>(G.data(), nn);
        }
        const ConditionalExpectation reg(base.x[ks], options.regression_degree, options.ridge);
        out.P_pred[ks] = reg.project(target);
        const Eigen::MatrixXd resid = target - out.P_pred[ks];
        const Eigen::MatrixXd& dw = base.noise->dw[ks];
        Eigen::MatrixXd qt(d * nn, N);
        for (int j = 0; j < d; ++j) {
            const Eigen::RowVectorXd scale = dw.row(j) / (w[j] * dt);
            qt.middleRows(j * nn, nn) = resid.array().rowwise() * scale.array();
        }
        out.Q[ks] = reg.project(qt);
        out.P[ks].resize(nn, N);
        std::vector<double> asym(static_cast<std::size_t>(N));
        parallel_for(static_cast<std::size_t>(N), options.exec, [&](std::size_t begin, std::size_t end) {
            std::vector<Eigen::MatrixXd> K(static_cast<std::size_t>(d)), Qj(static_cast<std::size_t>(d));
            Eigen::MatrixXd P;
            for (std::size_t ii = begin; ii < end; ++ii) {
                const auto i = static_cast<Eigen::Index>(ii);
                for (int j = 0; j < d; ++j) {
                    K[static_cast<std::size_t>(j)] = unflatten(out.K[ks], i, j * nn);
                    Qj[static_cast<std::size_t>(j)] = unflatten(out.Q[ks], i, j * nn);
                }
                asym[ii] = assemble(unflatten(out.P_pred[ks], i, 0), Qj, unflatten(out.J[ks], i, 0), K,
                                    unflatten(out.hxx[ks], i, 0), w, dt, P);
                out.P[ks].col(i) = Eigen::Map<const Eigen::VectorXd>(P.data(), nn);
            }
        });
        note_asymmetry(out, k, *std::max_element(asym.begin(), asym.end()));
    }
    return out;
}

SecondAdjointPath solve_second_adjoint_auto(const CoefficientModel& model, const GalerkinSpace& space,
                                            const StatePath& base, const ControlPath& ubar,
                                            const FirstAdjointPath& first, const AdjointOptions& options) {
    try {
        return solve_second_adjoint(model, space, base, ubar, first, SecondAdjointMethod::deterministic_lyapunov,
                                    options);
    } catch (const UnsupportedError&) {
        return solve_second_adjoint(model, space, base, ubar, first, SecondAdjointMethod::regression, options);
    }
}

}  // namespace mvlab
