#include "magma/train/model_io.hpp"

#include <cmath>

#include "magma/core/errors.hpp"

namespace magma {

namespace {

using nlohmann::json;

json kernel_json(const KernelParams& k) { return {{"variance", k.variance}, {"lengthscale", k.lengthscale}}; }

json individual_json(const IndividualParams& p) {
    return {{"variance", p.kernel.variance},
            {"lengthscale", p.kernel.lengthscale},
            {"noise_variance", p.noise.noise_variance}};
}

IndividualParams individual_from(const json& j) {
    return IndividualParams{KernelParams{j.at("variance").get<double>(), j.at("lengthscale").get<double>()},
                            NoiseParams{j.at("noise_variance").get<double>()}};
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json model_to_json(const TrainedModel& model, const json& run_config) {
    const auto& p = model.params;
    const auto& hp = model.hyper_posterior;
    json doc;
    doc["format_version"] = kModelFormatVersion;
    doc["hp_mode"] = to_string(p.mode);
    doc["mean_process"] = {{"variance", p.mean_kernel.variance},
                           {"lengthscale", p.mean_kernel.lengthscale},
                           {"prior_mean", p.prior_mean},
                           {"nugget", model.mean_process_nugget}};
    if (p.mode == HpMode::Common) {
        doc["shared"] = individual_json(p.shared);
    } else {
        json per = json::object();
        for (const auto& [id, ip] : p.per_individual) per[id] = individual_json(ip);
        doc["individuals"] = std::move(per);
    }
    json lower = json::array();
    for (Eigen::Index i = 0; i < hp.covariance.rows(); ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) lower.push_back(hp.covariance(i, j));
    }
    doc["hyper_posterior"] = {{"grid", hp.grid},
                              {"mean", std::vector<double>(hp.mean.data(), hp.mean.data() + hp.mean.size())},
                              {"covariance_lower", std::move(lower)}};
    doc["log_likelihood"] = model.log_likelihood;
    doc["log_likelihood_history"] = model.log_likelihood_history;
    doc["em_iterations"] = model.em_iterations;
    doc["restart_index"] = model.restart_index;
    json restarts = json::array();
    for (double ll : model.restart_log_likelihoods) restarts.push_back(number_or_null(ll));
    doc["restart_log_likelihoods"] = std::move(restarts);
    doc["restart_failures"] = model.restart_failures;
    doc["seed"] = model.seed;
    if (!run_config.is_null()) doc["run_config"] = run_config;
    return doc;
}

TrainedModel model_from_json(const json& doc) {
    try {
        if (doc.at("format_version").get<std::string>() != kModelFormatVersion) {
            throw DataError("unsupported model format version '" + doc.at("format_version").get<std::string>() + "'");
        }
        TrainedModel m;
        auto& p = m.params;
        p.mode = parse_hp_mode(doc.at("hp_mode").get<std::string>());
        const auto& mp = doc.at("mean_process");
        p.mean_kernel = KernelParams{mp.at("variance").get<double>(), mp.at("lengthscale").get<double>()};
        p.prior_mean = mp.at("prior_mean").get<double>();
        m.mean_process_nugget = mp.at("nugget").get<double>();
        if (p.mode == HpMode::Common) {
            p.shared = individual_from(doc.at("shared"));
        } else {
            for (const auto& [id, j] : doc.at("individuals").items()) p.per_individual[id] = individual_from(j);
        }
        const auto& hp = doc.at("hyper_posterior");
        m.hyper_posterior.grid = hp.at("grid").get<std::vector<double>>();
        const auto mean = hp.at("mean").get<std::vector<double>>();
        const auto lower = hp.at("covariance_lower").get<std::vector<double>>();
        const auto n = static_cast<Eigen::Index>(m.hyper_posterior.grid.size());
        if (static_cast<Eigen::Index>(mean.size()) != n ||
            static_cast<Eigen::Index>(lower.size()) != n * (n + 1) / 2) {
            throw DataError("model hyper-posterior sizes do not match its grid");
        }
        m.hyper_posterior.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), n);
        m.hyper_posterior.covariance.resize(n, n);
        std::size_t k = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j, ++k) {
                m.hyper_posterior.covariance(i, j) = lower[k];
                m.hyper_posterior.covariance(j, i) = lower[k];
            }
        }
        m.log_likelihood = doc.at("log_likelihood").get<double>();
        m.log_likelihood_history = doc.at("log_likelihood_history").get<std::vector<double>>();
        m.em_iterations = doc.at("em_iterations").get<int>();
        m.restart_index = doc.at("restart_index").get<int>();
        for (const auto& v : doc.at("restart_log_likelihoods")) {
            m.restart_log_likelihoods.push_back(v.is_null() ? std::nan("") : v.get<double>());
        }
        m.restart_failures = doc.at("restart_failures").get<std::vector<std::string>>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        p.validate();
        m.hyper_posterior.validate();
        if (!std::isfinite(m.log_likelihood)) throw DataError("model log-likelihood is not finite");
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model document: ") + e.what());
    } catch (const DomainError& e) {
        throw DataError(std::string("invalid model document: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("invalid model document: ") + e.what());
    }
}

std::string serialize_model(const TrainedModel& model, const json& run_config) {
    return model_to_json(model, run_config).dump(2) + "\n";
}

TrainedModel parse_model(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    return model_from_json(doc);
}

}  // namespace magma
