#include "magma/train/em.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <thread>

#include "magma/core/errors.hpp"
#include "magma/core/random.hpp"
#include "magma/train/objectives.hpp"

namespace magma {

namespace {

constexpr double kGridTolerance = 1e-9;

double log_uniform(Rng& rng, double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

void require_sorted_grid(std::span<const double> grid) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) throw DomainError("grid must be strictly increasing");
    }
}

Eigen::Index grid_index(std::span<const double> grid, double age) {
    auto it = std::lower_bound(grid.begin(), grid.end(), age - kGridTolerance);
    if (it == grid.end() || std::abs(*it - age) > kGridTolerance) {
        throw DomainError("observed age " + std::to_string(age) + " is not a grid point");
    }
    return static_cast<Eigen::Index>(it - grid.begin());
}

}  // namespace

std::vector<double> working_grid(std::span<const Individual> individuals, int extra_resolution) {
    if (individuals.empty()) throw DomainError("working_grid: no individuals");
    if (extra_resolution < 0) throw ConfigError("grid extra resolution must be >= 0");
    std::vector<double> ages;
    for (const auto& ind : individuals) {
        for (const auto& o : ind.observations()) ages.push_back(o.age);
    }
    const auto [lo_it, hi_it] = std::minmax_element(ages.begin(), ages.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (extra_resolution == 1) {
        ages.push_back(lo);
    } else {
        for (int k = 0; k < extra_resolution; ++k) {
            ages.push_back(k == extra_resolution - 1 ? hi : lo + (hi - lo) * k / (extra_resolution - 1));
        }
    }
    std::sort(ages.begin(), ages.end());
    std::vector<double> grid;
    for (double a : ages) {
        if (grid.empty() || a - grid.back() > kGridTolerance) grid.push_back(a);
    }
    return grid;
}

EStepResult e_step_detailed(std::span<const Individual> individuals, const ModelParams& params,
                            std::span<const double> grid, std::optional<double> nugget) {
    params.validate();
    if (grid.empty()) throw DomainError("e_step: empty grid");
    require_sorted_grid(grid);

    Eigen::MatrixXd prior_cov;
    EStepResult out;
    if (nugget) {
        prior_cov = kernel_matrix(params.mean_kernel, grid, grid);
        prior_cov.diagonal().array() += *nugget;
        out.mean_process_nugget = *nugget;
    } else {
        auto prior = mean_process_prior(params.mean_kernel, grid);
        prior_cov = std::move(prior.covariance);
        out.mean_process_nugget = prior.nugget;
    }
    const auto g = static_cast<Eigen::Index>(grid.size());
    out.hyper_posterior.grid.assign(grid.begin(), grid.end());

    std::vector<Eigen::Index> idx;
    std::vector<double> y;
    for (const auto& ind : individuals) {
        for (const auto& o : ind.observations()) {
            idx.push_back(grid_index(grid, o.age));
            y.push_back(o.value);
        }
    }
    const auto m = static_cast<Eigen::Index>(idx.size());
    if (m == 0) {
        out.hyper_posterior.mean = Eigen::VectorXd::Constant(g, params.prior_mean);
        out.hyper_posterior.covariance = std::move(prior_cov);
        return out;
    }

    // S = P K0 P^T + blockdiag(Psi_i)
    Eigen::MatrixXd s(m, m);
    for (Eigen::Index b = 0; b < m; ++b) {
        for (Eigen::Index a = 0; a < m; ++a) s(a, b) = prior_cov(idx[a], idx[b]);
    }
    Eigen::Index offset = 0;
    for (const auto& ind : individuals) {
        const auto n = static_cast<Eigen::Index>(ind.size());
        const auto& p = params.for_individual(ind.id());
        const auto ages = ind.ages();
        s.block(offset, offset, n, n) += kernel_matrix(p.kernel, ages, ages);
        s.block(offset, offset, n, n).diagonal().array() += p.noise.noise_variance;
        offset += n;
    }

    Eigen::MatrixXd cross(g, m);
    for (Eigen::Index b = 0; b < m; ++b) cross.col(b) = prior_cov.col(idx[b]);

    const CholeskyFactor chol = safe_cholesky(s);
    const Eigen::VectorXd residual = Eigen::Map<const Eigen::VectorXd>(y.data(), m).array() - params.prior_mean;
    const Eigen::VectorXd weights = chol.solve(residual);
    const Eigen::MatrixXd v = chol.solve_lower(cross.transpose());

    out.hyper_posterior.mean = (cross * weights).array() + params.prior_mean;
    Eigen::MatrixXd post = prior_cov;
    post.noalias() -= v.transpose() * v;
    out.hyper_posterior.covariance = symmetrize(post);
    out.log_likelihood = -0.5 * residual.dot(weights) - 0.5 * chol.log_determinant() -
                         0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi);
    return out;
}

HyperPosterior e_step(std::span<const Individual> individuals, const ModelParams& params,
                      std::span<const double> grid) {
    return e_step_detailed(individuals, params, grid).hyper_posterior;
}

double observed_log_likelihood(std::span<const Individual> individuals, const ModelParams& params) {
    const auto grid = working_grid(individuals, 0);
    return e_step_detailed(individuals, params, grid).log_likelihood;
}

LocalBelief restrict_to_ages(const HyperPosterior& hp, std::span<const double> ages) {
    const auto n = static_cast<Eigen::Index>(ages.size());
    std::vector<Eigen::Index> idx;
    idx.reserve(ages.size());
    for (double a : ages) {
        const auto found = hp.find(a, kGridTolerance);
        if (!found) throw DomainError("age " + std::to_string(a) + " is not on the hyper-posterior grid");
        idx.push_back(*found);
    }
    LocalBelief out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.mean(i) = hp.mean(idx[i]);
        for (Eigen::Index j = 0; j < n; ++j) out.covariance(i, j) = hp.covariance(idx[i], idx[j]);
    }
    return out;
}

ModelParams m_step(std::span<const Individual> individuals, const HyperPosterior& hp, const ModelParams& current,
                   const OptimizerOptions& options) {
    current.validate();
    hp.validate();
    ModelParams next = current;

    // Mean process: prior mean and variance in closed form, lengthscale by BFGS.
    {
        const Eigen::VectorXd start = Eigen::VectorXd::Constant(1, std::log(current.mean_kernel.lengthscale));
        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(1, std::log(kMinLengthscale));
        const Eigen::VectorXd hi = Eigen::VectorXd::Constant(1, std::log(kMaxLengthscale));
        const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
            auto p = profiled_mean_process_objective(hp, x(0));
            grad = p.objective.gradient;
            return p.objective.value;
        };
        const auto res = maximize(objective, start, lo, hi, options);
        const auto best = profiled_mean_process_objective(hp, res.x(0));
        next.mean_kernel = KernelParams{best.variance, std::exp(res.x(0))};
        next.prior_mean = best.prior_mean;
    }

    struct Local {
        std::vector<double> ages;
        Eigen::VectorXd values;
        LocalBelief belief;
    };
    std::vector<Local> locals;
    locals.reserve(individuals.size());
    for (const auto& ind : individuals) {
        Local l;
        l.ages = ind.ages();
        const auto vals = ind.values();
        l.values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
        l.belief = restrict_to_ages(hp, l.ages);
        locals.push_back(std::move(l));
    }

    const Eigen::VectorXd lo = individual_lower_bounds();
    const Eigen::VectorXd hi = individual_upper_bounds();
    if (current.mode == HpMode::Common) {
        const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
            const auto p = from_log_vector(x);
            double total = 0.0;
            grad = Eigen::VectorXd::Zero(3);
            for (const auto& l : locals) {
                const auto o = individual_objective(l.ages, l.values, l.belief.mean, l.belief.covariance, p);
                total += o.value;
                grad += o.gradient;
            }
            return total;
        };
        const auto res = maximize(objective, to_log_vector(current.shared), lo, hi, options);
        next.shared = from_log_vector(res.x);
    } else {
        for (std::size_t i = 0; i < individuals.size(); ++i) {
            const auto& l = locals[i];
            const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
                const auto o =
                    individual_objective(l.ages, l.values, l.belief.mean, l.belief.covariance, from_log_vector(x));
                grad = o.gradient;
                return o.value;
            };
            const auto& id = individuals[i].id();
            const auto res = maximize(objective, to_log_vector(current.for_individual(id)), lo, hi, options);
            next.per_individual[id] = from_log_vector(res.x);
        }
    }
    return next;
}

TrainedModel em_train(const Cohort& cohort, const ModelParams& init, const EmConfig& config) {
    if (config.max_iterations < 1) throw ConfigError("em max iterations must be >= 1");
    if (!(config.rel_tol >= 0.0)) throw ConfigError("em relative tolerance must be >= 0");
    init.validate();
    const auto& individuals = cohort.individuals();
    if (init.mode == HpMode::IndividualSpecific) {
        if (init.per_individual.size() != individuals.size()) {
            throw DomainError("initial parameters must cover exactly the training individuals");
        }
        for (const auto& ind : individuals) init.for_individual(ind.id());
    }

    const auto grid = working_grid(individuals, 0);
    ModelParams params = init;
    EStepResult e = e_step_detailed(individuals, params, grid);
    if (!std::isfinite(e.log_likelihood)) throw NumericalError("log-likelihood is not finite at initialization");

    TrainedModel model;
    model.log_likelihood_history.push_back(e.log_likelihood);
    for (int it = 1; it <= config.max_iterations; ++it) {
        params = m_step(individuals, e.hyper_posterior, params, config.optimizer);
        const double previous = e.log_likelihood;
        e = e_step_detailed(individuals, params, grid);
        if (!std::isfinite(e.log_likelihood)) throw NumericalError("log-likelihood became non-finite during EM");
        model.log_likelihood_history.push_back(e.log_likelihood);
        model.em_iterations = it;
        if (!(std::abs(e.log_likelihood - previous) >= config.rel_tol * std::abs(previous))) break;
    }

    model.params = params;
    model.log_likelihood = e.log_likelihood;
    model.mean_process_nugget = e.mean_process_nugget;
    if (config.grid_extra_resolution > 0) {
        const auto fine = working_grid(individuals, config.grid_extra_resolution);
        model.hyper_posterior =
            e_step_detailed(individuals, params, fine, e.mean_process_nugget).hyper_posterior;
    } else {
        model.hyper_posterior = std::move(e.hyper_posterior);
    }
    return model;
}

ModelParams random_initialization(const Cohort& cohort, HpMode mode, std::uint64_t seed, int index) {
    Rng rng(derive_seed(seed, "restart", static_cast<std::uint64_t>(index)));
    ModelParams p;
    p.mode = mode;
    p.mean_kernel = KernelParams{log_uniform(rng, 1e-2, 1e2), log_uniform(rng, 1e-2, 1e2)};
    p.prior_mean = cohort.mean_value();
    const auto draw = [&] {
        IndividualParams ip;
        ip.kernel = KernelParams{log_uniform(rng, 1e-2, 1e2), log_uniform(rng, 1e-2, 1e2)};
        ip.noise = NoiseParams{log_uniform(rng, 1e-2, 1e1)};
        return ip;
    };
    if (mode == HpMode::Common) {
        p.shared = draw();
    } else {
        for (const auto& ind : cohort.individuals()) p.per_individual[ind.id()] = draw();
    }
    return p;
}

TrainedModel train_with_restarts(const Cohort& cohort, HpMode mode, int n_restarts, std::uint64_t seed,
                                 const EmConfig& config, int max_threads) {
    if (n_restarts < 1) throw ConfigError("number of restarts must be >= 1");
    const auto n = static_cast<std::size_t>(n_restarts);
    std::vector<std::optional<TrainedModel>> models(n);
    std::vector<std::string> errors(n);

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t r = next++; r < n; r = next++) {
            try {
                models[r] = em_train(cohort, random_initialization(cohort, mode, seed, static_cast<int>(r)), config);
            } catch (const Error& e) {
                errors[r] = e.what();
            }
        }
    };
    unsigned threads = max_threads > 0 ? static_cast<unsigned>(max_threads) : std::thread::hardware_concurrency();
    threads = std::clamp(threads, 1u, static_cast<unsigned>(n));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    std::optional<std::size_t> best;
    std::vector<double> lls(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> failures;
    for (std::size_t r = 0; r < n; ++r) {
        if (!models[r]) {
            failures.push_back("restart " + std::to_string(r) + ": " + errors[r]);
            continue;
        }
        lls[r] = models[r]->log_likelihood;
        if (!best || lls[r] > lls[*best]) best = r;
    }
    if (!best) {
        std::string msg = "all " + std::to_string(n) + " restarts failed:";
        for (const auto& f : failures) msg += "\n  " + f;
        throw NumericalError(msg);
    }
    TrainedModel out = std::move(*models[*best]);
    out.restart_index = static_cast<int>(*best);
    out.seed = seed;
    out.restart_log_likelihoods = std::move(lls);
    out.restart_failures = std::move(failures);
    return out;
}

}  // namespace magma
