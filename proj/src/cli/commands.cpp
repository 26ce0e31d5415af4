#include "magma/cli/commands.hpp"

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "magma/cli/config.hpp"
#include "magma/cli/io.hpp"
#include "magma/core/errors.hpp"
#include "magma/data/cohort.hpp"
#include "magma/data/normative_band.hpp"
#include "magma/data/synthetic.hpp"
#include "magma/eval/evaluation.hpp"
#include "magma/predict/predict.hpp"
#include "magma/train/em.hpp"
#include "magma/train/model_io.hpp"

namespace magma::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Run-config flags shared by every subcommand.
struct RunFlags {
    CLI::App* app = nullptr;
    std::string config_path;
    std::uint64_t seed = 0;
    std::string hp_mode;
    int restarts = 0;
    int em_max_iter = 0;
    double em_rel_tol = 0.0;
    int grid_resolution = 0;
    double train_fraction = 0.0;
    json file_doc = json::object();

    void attach(CLI::App* sub) {
        app = sub;
        sub->add_option("--config", config_path, "JSON config file; flags override its values");
        sub->add_option("--seed", seed, "Master seed");
        sub->add_option("--hp-mode", hp_mode, "Hyperparameter mode: common or individual");
        sub->add_option("--restarts", restarts, "Number of EM restarts (default 25)");
        sub->add_option("--em-max-iter", em_max_iter, "Maximum EM iterations (default 100)");
        sub->add_option("--em-rel-tol", em_rel_tol, "Relative log-likelihood tolerance (default 1e-4)");
        sub->add_option("--grid-resolution", grid_resolution, "Extra uniform grid points (default 200)");
        sub->add_option("--train-fraction", train_fraction, "Training share of the split (default 0.75)");
    }

    bool given(const char* flag) const { return app->count(flag) > 0; }

    RunConfig resolve() {
        RunConfig c;
        if (!config_path.empty()) {
            const auto text = read_file(config_path);
            try {
                file_doc = json::parse(text);
            } catch (const json::exception& e) {
                throw ConfigError("cannot parse config '" + config_path + "': " + e.what());
            }
            c = run_config_from_json(file_doc);
        }
        if (given("--seed")) c.seed = seed;
        if (given("--hp-mode")) c.hp_mode = parse_hp_mode(hp_mode);
        if (given("--restarts")) c.n_restarts = restarts;
        if (given("--em-max-iter")) c.em_max_iter = em_max_iter;
        if (given("--em-rel-tol")) c.em_rel_tol = em_rel_tol;
        if (given("--grid-resolution")) c.grid_extra_resolution = grid_resolution;
        if (given("--train-fraction")) c.train_fraction = train_fraction;
        c.validate();
        return c;
    }
};

json artifact_header(std::string_view command, const RunConfig& config) {
    return json{{"format_version", kArtifactFormatVersion}, {"command", command}, {"run_config", to_json(config)}};
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

fs::path sidecar_path(const fs::path& out) {
    auto p = out;
    p += ".meta.json";
    return p;
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
    for (const auto& w : warnings) err << "warning: " << w << "\n";
}

std::vector<double> targets_from(const std::string& list, const std::string& grid) {
    if (list.empty() == grid.empty()) throw ConfigError("give exactly one of --targets or --grid");
    return list.empty() ? parse_grid_spec(grid) : parse_target_list(list);
}

std::string prediction_csv(const TrajectoryPrediction& p) {
    std::ostringstream os;
    os << "age_years,mean,variance,lower95,upper95\n";
    for (std::size_t i = 0; i < p.targets.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        os << format_double(p.targets[i]) << ',' << format_double(p.mean(k)) << ',' << format_double(p.variance(k))
           << ',' << format_double(p.lower95(k)) << ',' << format_double(p.upper95(k)) << '\n';
    }
    return os.str();
}

json params_json(const IndividualParams& p) {
    return json{{"variance", p.kernel.variance},
                {"lengthscale", p.kernel.lengthscale},
                {"noise_variance", p.noise.noise_variance}};
}

struct LoadedModel {
    TrainedModel model;
    std::string sha256;
};

LoadedModel load_model(const std::string& path) {
    const auto text = read_file(path);
    return {parse_model(text), sha256_hex(text)};
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
    RunFlags flags;
    std::string out;
    std::string truth;
};

void cmd_simulate(SimulateArgs& a, std::ostream& out) {
    const auto config = a.flags.resolve();
    SyntheticConfig synthetic;
    if (a.flags.file_doc.contains("synthetic")) synthetic = synthetic_config_from_json(a.flags.file_doc.at("synthetic"));
    synthetic.validate();

    fs::path truth_path = a.truth;
    if (truth_path.empty()) truth_path = fs::path(a.out).replace_extension(".truth.csv");
    const auto generated = synthesize_cohort(synthetic, config.seed);

    const auto cohort_text = serialize_cohort_csv(generated.cohort);
    const auto truth_text = serialize_truth_csv(generated.truth);
    auto meta = artifact_header("simulate", config);
    meta["synthetic"] = to_json(synthetic);
    meta["cohort_sha256"] = sha256_hex(cohort_text);
    meta["truth_sha256"] = sha256_hex(truth_text);
    write_file_atomic(a.out, cohort_text);
    write_file_atomic(truth_path, truth_text);
    write_file_atomic(sidecar_path(a.out), dump(meta));
    out << "simulated " << generated.cohort.size() << " individuals, " << generated.cohort.observation_count()
        << " observations\n";
}

// --- split ----------------------------------------------------------------

struct SplitArgs {
    RunFlags flags;
    std::string input;
    std::string out_dir;
};

void cmd_split(SplitArgs& a, std::ostream& out, std::ostream& err) {
    const auto config = a.flags.resolve();
    const auto text = read_file(a.input);
    std::vector<std::string> warnings;
    const auto cohort = parse_cohort_csv(text, &warnings);
    print_warnings(warnings, err);
    const auto split = quasi_random_split(cohort, SplitSpec{config.train_fraction, config.seed});

    const auto ids = [](const Cohort& c) {
        json list = json::array();
        for (const auto& ind : c.individuals()) list.push_back(ind.id());
        return list;
    };
    json singletons = json::array();
    for (const auto& ind : split.train.individuals()) {
        if (ind.size() == 1) singletons.push_back(ind.id());
    }
    auto manifest = artifact_header("split", config);
    manifest["input_sha256"] = sha256_hex(text);
    manifest["n_train"] = split.train.size();
    manifest["n_test"] = split.test.size();
    manifest["train_ids"] = ids(split.train);
    manifest["test_ids"] = ids(split.test);
    manifest["singletons_in_train"] = singletons;

    const fs::path dir = a.out_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir.string() + "'");
    write_file_atomic(dir / "train.csv", serialize_cohort_csv(split.train));
    write_file_atomic(dir / "test.csv", serialize_cohort_csv(split.test));
    write_file_atomic(dir / "manifest.json", dump(manifest));
    out << "train " << split.train.size() << ", test " << split.test.size() << "\n";
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
    RunFlags flags;
    std::string input;
    std::string out;
    int threads = 0;
};

void cmd_train(TrainArgs& a, std::ostream& out, std::ostream& err) {
    const auto config = a.flags.resolve();
    const auto text = read_file(a.input);
    std::vector<std::string> warnings;
    const auto cohort = parse_cohort_csv(text, &warnings);
    print_warnings(warnings, err);

    EmConfig em;
    em.max_iterations = config.em_max_iter;
    em.rel_tol = config.em_rel_tol;
    em.grid_extra_resolution = config.grid_extra_resolution;

    TrainedModel model;
    try {
        model = train_with_restarts(cohort, config.hp_mode, config.n_restarts, config.seed, em, a.threads);
    } catch (const NumericalError& e) {
        err << "training failed: " << e.what() << "\n";
        throw;
    }
    for (std::size_t r = 0; r < model.restart_log_likelihoods.size(); ++r) {
        const double ll = model.restart_log_likelihoods[r];
        out << "restart " << r << ": ";
        if (std::isfinite(ll)) {
            out << "log_likelihood " << format_double(ll) << "\n";
        } else {
            out << "failed\n";
        }
    }
    for (const auto& f : model.restart_failures) err << "warning: " << f << "\n";
    out << "selected restart " << model.restart_index << " (log_likelihood " << format_double(model.log_likelihood)
        << ", " << model.em_iterations << " EM iterations)\n";

    auto run_config = to_json(config);
    run_config["training_data_sha256"] = sha256_hex(text);
    write_file_atomic(a.out, serialize_model(model, run_config));
}

// --- predict --------------------------------------------------------------

struct PredictArgs {
    RunFlags flags;
    std::string model;
    std::string observations;
    std::string id;
    std::string targets;
    std::string grid;
    std::string out;
    bool with_noise = false;
};

void cmd_predict(PredictArgs& a, std::ostream& out, std::ostream& err) {
    auto config = a.flags.resolve();
    const auto loaded = load_model(a.model);
    const auto& model = loaded.model;
    config.hp_mode = model.params.mode;
    const auto targets = targets_from(a.targets, a.grid);

    const auto obs_text = read_file(a.observations);
    std::vector<Observation> obs;
    std::string id = a.id;
    if (obs_text.find_first_not_of(" \t\r\n") != std::string::npos) {
        auto parsed = parse_observation_csv(obs_text);
        print_warnings(parsed.warnings, err);
        const Individual* chosen = nullptr;
        for (const auto& ind : parsed.individuals) {
            if (id.empty() || ind.id() == id) {
                if (chosen) throw DataError("observation file holds several individuals; select one with --id");
                chosen = &ind;
            }
        }
        if (chosen) {
            obs = chosen->observations();
            id = chosen->id();
        } else if (!id.empty()) {
            throw DataError("no observations for individual '" + id + "'");
        }
    }

    std::string hp_source = "shared";
    IndividualParams params = baseline_individual_params(model);
    if (model.params.mode == HpMode::IndividualSpecific) {
        if (obs.empty()) {
            hp_source = "baseline";
        } else {
            params = fit_new_individual_hps(model, obs);
            hp_source = "refit";
        }
    }
    const auto scale = a.with_noise ? PredictionScale::Observation : PredictionScale::Latent;
    const auto prediction = predict_trajectory(model, obs, targets, params, scale);

    auto meta = artifact_header("predict", config);
    meta["model_sha256"] = loaded.sha256;
    meta["observations_sha256"] = sha256_hex(obs_text);
    meta["individual_id"] = id;
    meta["n_observations"] = obs.size();
    meta["scale"] = a.with_noise ? "observation" : "latent";
    meta["hp_source"] = hp_source;
    meta["individual_params"] = params_json(params);
    write_file_atomic(a.out, prediction_csv(prediction));
    write_file_atomic(sidecar_path(a.out), dump(meta));
    out << "predicted " << targets.size() << " ages from " << obs.size() << " observations\n";
}

// --- evaluate -------------------------------------------------------------

struct EvaluateArgs {
    RunFlags flags;
    std::string model;
    std::string test;
    std::string out;
};

void cmd_evaluate(EvaluateArgs& a, std::ostream& out, std::ostream& err) {
    auto config = a.flags.resolve();
    const auto loaded = load_model(a.model);
    config.hp_mode = loaded.model.params.mode;
    const auto text = read_file(a.test);
    std::vector<std::string> warnings;
    const auto cohort = parse_cohort_csv(text, &warnings);
    print_warnings(warnings, err);

    std::vector<Individual> kept;
    json skipped = json::array();
    for (const auto& ind : cohort.individuals()) {
        if (ind.size() < 2) {
            err << "warning: skipping '" << ind.id() << "': " << ind.size() << " observation(s), need at least 2\n";
            skipped.push_back(json{{"id", ind.id()}, {"n_observations", ind.size()}});
            continue;
        }
        kept.push_back(ind);
    }
    if (kept.empty()) throw DataError("no test individual has at least 2 observations");
    const auto report = evaluate_test_set(loaded.model, Cohort(std::move(kept)), config.seed);

    fs::path csv_path = a.out;
    fs::path json_path = a.out;
    if (csv_path.extension() == ".csv") {
        json_path.replace_extension(".json");
    } else {
        csv_path += ".csv";
        json_path += ".json";
    }

    int total_prediction = 0;
    int total_evaluation = 0;
    std::ostringstream csv;
    csv << "case,prediction,evaluation,rmse,cic95\n";
    json cases = json::array();
    for (const auto& c : report.per_case) {
        total_prediction += c.n_prediction;
        total_evaluation += c.n_evaluation;
        csv << c.case_id << ',' << c.n_prediction << ',' << c.n_evaluation << ',' << format_double(c.rmse) << ','
            << format_double(c.cic95) << '\n';
        cases.push_back(json{{"case", c.case_id},
                             {"prediction", c.n_prediction},
                             {"evaluation", c.n_evaluation},
                             {"rmse", c.rmse},
                             {"cic95", c.cic95},
                             {"covered", c.n_covered}});
    }
    csv << "mean_unweighted," << total_prediction << ',' << total_evaluation << ','
        << format_double(report.mean_rmse_unweighted) << ',' << format_double(report.overall_cic95) << '\n';
    csv << "mean_pooled," << total_prediction << ',' << total_evaluation << ','
        << format_double(report.mean_rmse_pooled) << ',' << format_double(report.overall_cic95) << '\n';

    auto doc = artifact_header("evaluate", config);
    doc["model_sha256"] = loaded.sha256;
    doc["test_sha256"] = sha256_hex(text);
    doc["hp_mode"] = std::string(to_string(report.hp_mode));
    doc["hp_source"] = std::string(to_string(report.hp_source));
    doc["seed"] = report.seed;
    doc["per_case"] = cases;
    doc["mean_rmse_unweighted"] = report.mean_rmse_unweighted;
    doc["mean_rmse_pooled"] = report.mean_rmse_pooled;
    doc["overall_cic95"] = report.overall_cic95;
    doc["skipped"] = skipped;

    write_file_atomic(csv_path, csv.str());
    write_file_atomic(json_path, dump(doc));
    out << report.per_case.size() << " cases, mean RMSE " << format_double(report.mean_rmse_unweighted)
        << " (pooled " << format_double(report.mean_rmse_pooled) << "), CIC-95 "
        << format_double(report.overall_cic95) << "\n";
}

// --- curves ---------------------------------------------------------------

struct CurvesArgs {
    RunFlags flags;
    std::string model;
    std::string band;
    std::string grid;
    std::string out;
};

void cmd_curves(CurvesArgs& a, std::ostream& out) {
    auto config = a.flags.resolve();
    const auto loaded = load_model(a.model);
    config.hp_mode = loaded.model.params.mode;
    const auto targets = parse_grid_spec(a.grid);
    const auto curve = population_curve(loaded.model, targets);

    std::optional<NormativeBand> band;
    std::string band_sha;
    if (!a.band.empty()) {
        const auto text = read_file(a.band);
        band.emplace(parse_band_csv(text));
        band_sha = sha256_hex(text);
    }

    std::ostringstream csv;
    csv << "age_years,mean,lower95,upper95" << (band ? ",band_lower,band_upper" : "") << '\n';
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        csv << format_double(targets[i]) << ',' << format_double(curve.mean(k)) << ','
            << format_double(curve.lower95(k)) << ',' << format_double(curve.upper95(k));
        if (band) csv << ',' << format_double(band->lower_at(targets[i])) << ',' << format_double(band->upper_at(targets[i]));
        csv << '\n';
    }

    auto meta = artifact_header("curves", config);
    meta["model_sha256"] = loaded.sha256;
    if (band) {
        const auto coverage = band_coverage(curve, *band);
        meta["band_sha256"] = band_sha;
        meta["band_coverage"] = json{{"mean_in_band", coverage.mean_in_band},
                                     {"interval_in_band", coverage.interval_in_band}};
        out << "mean_in_band " << format_double(coverage.mean_in_band) << "\n";
        out << "interval_in_band " << format_double(coverage.interval_in_band) << "\n";
    }
    write_file_atomic(a.out, csv.str());
    write_file_atomic(sidecar_path(a.out), dump(meta));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-task Gaussian process regression with a common mean process"};
    app.name("magma");
    app.require_subcommand(1);

    SimulateArgs simulate;
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic cohort and its true mean curve");
    simulate.flags.attach(sim);
    sim->add_option("--out", simulate.out, "Cohort CSV")->required();
    sim->add_option("--truth", simulate.truth, "Truth CSV (default: <out>.truth.csv)");

    SplitArgs split;
    auto* spl = app.add_subcommand("split", "Split a cohort into training and test sets");
    split.flags.attach(spl);
    spl->add_option("--input", split.input, "Cohort CSV")->required();
    spl->add_option("--out-dir", split.out_dir, "Directory for train.csv, test.csv, manifest.json")->required();

    TrainArgs train;
    auto* trn = app.add_subcommand("train", "Fit the model by EM with random restarts");
    train.flags.attach(trn);
    trn->add_option("--input", train.input, "Training cohort CSV")->required();
    trn->add_option("--out", train.out, "Model JSON")->required();
    trn->add_option("--threads", train.threads, "Worker threads for restarts (0 = all cores)");

    PredictArgs predict;
    auto* pre = app.add_subcommand("predict", "Predict one individual's trajectory");
    predict.flags.attach(pre);
    pre->add_option("--model", predict.model, "Model JSON")->required();
    pre->add_option("--observations", predict.observations, "Observation CSV, may be empty")->required();
    pre->add_option("--id", predict.id, "Individual to use when the file holds several");
    pre->add_option("--targets", predict.targets, "Comma-separated target ages");
    pre->add_option("--grid", predict.grid, "Target grid start:stop:count");
    pre->add_flag("--with-noise", predict.with_noise, "Include measurement noise in the variance");
    pre->add_option("--out", predict.out, "Prediction CSV")->required();

    EvaluateArgs evaluate;
    auto* evl = app.add_subcommand("evaluate", "Score predictions on a held-out test cohort");
    evaluate.flags.attach(evl);
    evl->add_option("--model", evaluate.model, "Model JSON")->required();
    evl->add_option("--test", evaluate.test, "Test cohort CSV")->required();
    evl->add_option("--out", evaluate.out, "Report path; writes <base>.csv and <base>.json")->required();

    CurvesArgs curves;
    auto* cur = app.add_subcommand("curves", "Export the population mean curve and credible band");
    curves.flags.attach(cur);
    cur->add_option("--model", curves.model, "Model JSON")->required();
    cur->add_option("--band", curves.band, "Normative band CSV");
    cur->add_option("--grid", curves.grid, "Age grid start:stop:count")->required();
    cur->add_option("--out", curves.out, "Curves CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    try {
        if (*sim) cmd_simulate(simulate, out);
        if (*spl) cmd_split(split, out, err);
        if (*trn) cmd_train(train, out, err);
        if (*pre) cmd_predict(predict, out, err);
        if (*evl) cmd_evaluate(evaluate, out, err);
        if (*cur) cmd_curves(curves, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace magma::cli
