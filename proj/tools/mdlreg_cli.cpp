// Experiment harness: config-driven runs of the spectrum / coding / estimator
// / risk machinery with seeded, re-runnable outputs.
//
// Exit codes: 0 ok, 2 invalid config, 3 numerical failure, 4 I/O failure.

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mdlreg/mdlreg.hpp"

using namespace mdlreg;
using nlohmann::json;

namespace {

struct ExperimentConfig {
    std::string experiment;
    int d = 2;
    int m = 500;
    std::vector<long> n_list{1000};
    std::vector<int> m_list;
    double sigma2 = 1.0;
    double alpha = 2.0;
    std::optional<int> D_override;
    long trials = 100;
    long mc_samples = 100000;   // x draws for the Monte Carlo FIM
    long renyi_samples = 20000; // x draws per risk evaluation
    std::optional<double> lambda_order;
    std::optional<std::uint64_t> seed;
    std::string output_path;
    std::string method = "nearest_plane";
    std::string fim_dump; // optional binary dump of the Monte Carlo FIM
    unsigned threads = default_threads();

    double lambda_order_value() const {
        return lambda_order ? *lambda_order : 1.0 - 1.0 / alpha;
    }
    SolveMethod solve_method() const {
        return method == "exhaustive" ? SolveMethod::exhaustive : SolveMethod::nearest_plane;
    }
};

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void merge_json(ExperimentConfig& cfg, const json& j) {
    if (j.contains("experiment")) cfg.experiment = j.at("experiment").get<std::string>();
    if (j.contains("d")) cfg.d = j.at("d").get<int>();
    if (j.contains("m")) cfg.m = j.at("m").get<int>();
    if (j.contains("n")) cfg.n_list = {j.at("n").get<long>()};
    if (j.contains("n_list")) cfg.n_list = j.at("n_list").get<std::vector<long>>();
    if (j.contains("m_list")) cfg.m_list = j.at("m_list").get<std::vector<int>>();
    if (j.contains("sigma2")) cfg.sigma2 = j.at("sigma2").get<double>();
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("D_override")) cfg.D_override = j.at("D_override").get<int>();
    if (j.contains("trials")) cfg.trials = j.at("trials").get<long>();
    if (j.contains("mc_samples")) cfg.mc_samples = j.at("mc_samples").get<long>();
    if (j.contains("renyi_samples")) cfg.renyi_samples = j.at("renyi_samples").get<long>();
    if (j.contains("lambda_order")) cfg.lambda_order = j.at("lambda_order").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output_path")) cfg.output_path = j.at("output_path").get<std::string>();
    if (j.contains("method")) cfg.method = j.at("method").get<std::string>();
    if (j.contains("fim_dump")) cfg.fim_dump = j.at("fim_dump").get<std::string>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<unsigned>();
}

json resolved_config_json(const ExperimentConfig& cfg) {
    json j{{"experiment", cfg.experiment},
           {"d", cfg.d},
           {"m", cfg.m},
           {"n_list", cfg.n_list},
           {"sigma2", cfg.sigma2},
           {"alpha", cfg.alpha},
           {"trials", cfg.trials},
           {"mc_samples", cfg.mc_samples},
           {"renyi_samples", cfg.renyi_samples},
           {"lambda_order", cfg.lambda_order_value()},
           {"seed", cfg.seed.value_or(0)},
           {"method", cfg.method}};
    if (!cfg.m_list.empty()) j["m_list"] = cfg.m_list;
    if (cfg.D_override) j["D_override"] = *cfg.D_override;
    return j;
}

void validate(const ExperimentConfig& cfg) {
    if (!cfg.seed)
        throw config_error("a seed is required (config \"seed\" or --seed); "
                           "runs are never seeded from the clock");
    if (!(cfg.alpha > 1.0)) throw config_error("alpha must exceed 1");
    if (cfg.d < 1 || cfg.m < 1) throw config_error("d and m must be positive");
    if (cfg.sigma2 <= 0.0) throw config_error("sigma2 must be positive");
    if (cfg.trials < 2) throw config_error("trials must be at least 2");
    if (cfg.mc_samples < 1 || cfg.renyi_samples < 1)
        throw config_error("sample counts must be positive");
    if (cfg.n_list.empty()) throw config_error("n (or n_list) is required");
    for (long n : cfg.n_list)
        if (n < 1) throw config_error("every n must be positive");
    const double lambda = cfg.lambda_order_value();
    if (!(lambda > 0.0 && lambda < 1.0))
        throw config_error("lambda_order must lie in (0, 1)");
    if (lambda > 1.0 - 1.0 / cfg.alpha + 1e-12)
        throw config_error("lambda_order must not exceed 1 - 1/alpha");
    if (cfg.method != "exhaustive" && cfg.method != "nearest_plane")
        throw config_error("method must be \"exhaustive\" or \"nearest_plane\"");
    if (cfg.threads < 1) throw config_error("threads must be positive");
}

std::string timestamp_utc() {
    char buf[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

class CsvWriter {
  public:
    CsvWriter(const std::string& path, const ExperimentConfig& cfg) : out_(path), path_(path) {
        if (!out_) throw io_error("cannot open for writing: " + path);
        out_ << "# config: " << resolved_config_json(cfg).dump() << "\n";
        out_ << "# generated: " << timestamp_utc() << "\n";
    }
    void comment(const std::string& line) { out_ << "# " << line << "\n"; }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }
    void close() {
        out_.flush();
        if (!out_) throw io_error("write failed: " + path_);
    }

  private:
    std::ofstream out_;
    std::string path_;
};

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

std::string default_output(const ExperimentConfig& cfg, const char* ext) {
    return cfg.output_path.empty() ? cfg.experiment + ext : cfg.output_path;
}

int spectrum_dimension(const ExperimentConfig& cfg) {
    const int D = cfg.D_override.value_or(relu_basis_dimension(cfg.d));
    if (D < 1) throw config_error("D_override must be positive");
    return D;
}

// ---------------------------------------------------------------- spectrum
void run_spectrum(const ExperimentConfig& cfg) {
    const NetworkModel model = make_network_model(cfg.d, cfg.m, cfg.sigma2, *cfg.seed);
    const FimMatrix fim =
        monte_carlo_fim(model, cfg.mc_samples, derive_seed(*cfg.seed, 1), cfg.threads);
    if (!cfg.fim_dump.empty()) write_matrix_binary(cfg.fim_dump, fim.J);
    const Spectrum spectrum = exact_spectrum(fim);
    const int D = std::min(spectrum_dimension(cfg), cfg.m);
    const double beta = beta_D(spectrum, D);

    json j = spectrum_report_json(spectrum, D, beta);
    j["config"] = resolved_config_json(cfg);
    j["top_share"] = 1.0 - beta;
    json groups;
    groups["lambda_1"] = {{"value", spectrum.eigenvalues(0)},
                          {"theory", (2.0 * cfg.d + 1.0) / (4.0 * std::numbers::pi)}};
    std::vector<double> second(
        spectrum.eigenvalues.data() + 1,
        spectrum.eigenvalues.data() + std::min<long>(1 + cfg.d, cfg.m));
    groups["ranks_2_to_d+1"] = {{"values", second}, {"theory", 0.25}};
    const long third_end = std::min<long>(D, cfg.m);
    std::vector<double> third(spectrum.eigenvalues.data() + std::min<long>(1 + cfg.d, third_end),
                              spectrum.eigenvalues.data() + third_end);
    groups["remaining_to_D"] = {{"values", third},
                                {"theory", 1.0 / (2.0 * std::numbers::pi * cfg.d)}};
    j["groups"] = groups;

    write_json_file(default_output(cfg, ".json"), j);
}

// -------------------------------------------------------------- code-table
void run_code_table(const ExperimentConfig& cfg) {
    const NetworkModel model = make_network_model(cfg.d, cfg.m, cfg.sigma2, *cfg.seed);
    const ApproxBasis basis = approx_basis(model);
    const GramReport gram = gram_report(basis);
    const int D = std::min(spectrum_dimension(cfg), basis.D);
    const Eigen::VectorXd lambdas = basis.approx_eigenvalues.head(D);
    const long n = cfg.n_list.front();
    const CodeSpec spec =
        build_code(lambdas, cfg.alpha, cfg.sigma2, n, std::sqrt(1.0 + gram.eps1));
    const LengthBoundReport bound = length_bound_check(spec);

    CsvWriter csv(default_output(cfg, ".csv"), cfg);
    csv.comment("eps1 = " + num(gram.eps1) + ", radius = " + num(spec.radius));
    csv.comment("kraft_sum = " + num(kraft_sum(spec)));
    csv.row({"i", "lambda", "delta", "q", "length_nats", "length_bits", "c_i", "bound_slack"});
    for (int i = 0; i < spec.D; ++i) {
        const CodeDirection& dir = spec.directions[static_cast<std::size_t>(i)];
        csv.row({std::to_string(i + 1), num(dir.lambda), num(dir.delta),
                 std::to_string(dir.q), num(dir.length_nats),
                 num(dir.length_nats / std::log(2.0)), num(dir.c), num(bound.slack[i])});
    }
    csv.close();
}

// ---------------------------------------------------------------- estimate
void run_estimate(const ExperimentConfig& cfg) {
    const NetworkModel model = make_network_model(cfg.d, cfg.m, cfg.sigma2, *cfg.seed);
    const TrueParam vstar = sample_true_param(cfg.m, derive_seed(*cfg.seed, 2));
    const ApproxBasis basis = approx_basis(model);
    const GramReport gram = gram_report(basis);
    const long n = cfg.n_list.front();
    const CodeSpec spec = build_code(basis.approx_eigenvalues, cfg.alpha, cfg.sigma2, n,
                                     std::sqrt(1.0 + gram.eps1));
    const Dataset data = generate_dataset(model, vstar, n, derive_seed(*cfg.seed, 3));
    const ReducedProblem problem = reduce(data, basis.basis_rows, cfg.sigma2);
    const MdlEstimate est = mdl_estimate(problem, spec, cfg.alpha, cfg.solve_method());

    json j;
    j["config"] = resolved_config_json(cfg);
    j["estimate"] = estimate_json(est);
    j["estimate"]["ridged"] = est.ridged;
    j["code"] = code_spec_json(spec);
    j["eps1"] = gram.eps1;
    j["vstar_norm"] = vstar.v.norm();
    j["v_ddot_norm"] = est.v_ddot.norm();
    j["dist_to_vstar"] = (est.v_ddot - vstar.v).norm();
    write_json_file(default_output(cfg, ".json"), j);
}

// ------------------------------------------------- redundancy / risk-curve
void run_tables(const ExperimentConfig& cfg, bool with_risk) {
    const NetworkModel model = make_network_model(cfg.d, cfg.m, cfg.sigma2, *cfg.seed);
    const TrueParam vstar = sample_true_param(cfg.m, derive_seed(*cfg.seed, 2));
    const ApproxBasis basis = approx_basis(model);
    const GramReport gram = gram_report(basis);
    const FimMatrix fim =
        monte_carlo_fim(model, cfg.mc_samples, derive_seed(*cfg.seed, 1), cfg.threads);
    const Spectrum spectrum = exact_spectrum(fim);
    const double trace = spectrum.trace;
    const int D = basis.D;
    const double radius = std::sqrt(1.0 + gram.eps1);
    const double lambda_order = cfg.lambda_order_value();

    CsvWriter csv(default_output(cfg, ".csv"), cfg);
    if (with_risk)
        csv.row({"n", "alpha", "lambda_order", "D", "trials", "risk_mean", "risk_se",
                 "redundancy_mean", "redundancy_se", "bound_cor1", "bound_thm3", "term_log",
                 "term_c", "term_dim", "term_tail", "eps1", "beta", "trace"});
    else
        csv.row({"n", "alpha", "D", "trials", "redundancy_mean", "redundancy_se",
                 "redundancy_per_n", "bound_thm2_scale", "eps1", "beta", "trace"});

    for (std::size_t i = 0; i < cfg.n_list.size(); ++i) {
        const long n = cfg.n_list[i];
        const CodeSpec spec =
            build_code(basis.approx_eigenvalues, cfg.alpha, cfg.sigma2, n, radius);
        RenyiConfig rcfg{lambda_order, cfg.renyi_samples, derive_seed(*cfg.seed, 2000 + i)};
        const auto outcomes =
            run_risk_trials(model, vstar, spec, basis, cfg.alpha, rcfg, cfg.trials, n,
                            derive_seed(*cfg.seed, 1000 + i), cfg.solve_method(), with_risk,
                            cfg.threads);
        std::vector<double> risks, reds;
        for (const auto& o : outcomes) {
            risks.push_back(o.risk);
            reds.push_back(o.redundancy);
        }
        const TrialSummary red = summarize(reds);
        const BoundBreakdown thm3 = thm3_rhs(basis.approx_eigenvalues, trace, D, cfg.alpha,
                                             cfg.sigma2, n, gram.eps1);
        if (with_risk) {
            const TrialSummary risk = summarize(risks);
            const BoundBreakdown cor1 = cor1_rhs(spectrum.eigenvalues.head(D), trace, D,
                                                 cfg.alpha, cfg.sigma2, n);
            csv.row({std::to_string(n), num(cfg.alpha), num(lambda_order), std::to_string(D),
                     std::to_string(cfg.trials), num(risk.mean), num(risk.se), num(red.mean),
                     num(red.se), num(cor1.total), num(thm3.total), num(thm3.term_log),
                     num(thm3.term_c), num(thm3.term_dim), num(thm3.term_tail),
                     num(gram.eps1), num(thm3.beta), num(trace)});
        } else {
            csv.row({std::to_string(n), num(cfg.alpha), std::to_string(D),
                     std::to_string(cfg.trials), num(red.mean), num(red.se),
                     num(red.mean / double(n)), num(thm3.total * double(n)), num(gram.eps1),
                     num(thm3.beta), num(trace)});
        }
    }
    csv.close();
}

// --------------------------------------------------------------- gram-check
void run_gram_check(const ExperimentConfig& cfg) {
    std::vector<int> widths = cfg.m_list.empty() ? std::vector<int>{cfg.m} : cfg.m_list;
    CsvWriter csv(default_output(cfg, ".csv"), cfg);
    csv.row({"m", "D", "eps1", "min_row_norm", "max_row_norm", "radius"});
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const NetworkModel model =
            make_network_model(cfg.d, widths[i], cfg.sigma2, derive_seed(*cfg.seed, i));
        const ApproxBasis basis = approx_basis(model);
        const GramReport gram = gram_report(basis);
        const Eigen::VectorXd norms = basis.basis_rows.rowwise().norm();
        csv.row({std::to_string(widths[i]), std::to_string(basis.D), num(gram.eps1),
                 num(norms.minCoeff()), num(norms.maxCoeff()),
                 num(std::sqrt(1.0 + gram.eps1))});
    }
    csv.close();
}

void dispatch(const ExperimentConfig& cfg) {
    if (cfg.experiment == "spectrum")
        run_spectrum(cfg);
    else if (cfg.experiment == "code_table")
        run_code_table(cfg);
    else if (cfg.experiment == "estimate")
        run_estimate(cfg);
    else if (cfg.experiment == "redundancy")
        run_tables(cfg, false);
    else if (cfg.experiment == "risk_curve")
        run_tables(cfg, true);
    else if (cfg.experiment == "gram_check")
        run_gram_check(cfg);
    else
        throw config_error("unknown experiment: " + cfg.experiment);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MDL two-stage coding experiments for ReLU random-feature regression"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    std::string config_path, out_path;
    std::optional<std::uint64_t> seed_flag;
    std::optional<unsigned> threads_flag;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed_flag, "run seed (overrides the config)");
    app.add_option("--out", out_path, "output path (overrides the config)");
    app.add_option("--threads", threads_flag, "worker count (overrides the config)");

    const std::vector<std::pair<std::string, std::string>> experiments = {
        {"spectrum", "Monte Carlo FIM spectrum, eigenvalue groups, beta_D"},
        {"code-table", "per-direction quantization widths, lengths, Kraft check"},
        {"estimate", "one MDL fit with the full estimate dump"},
        {"redundancy", "empirical redundancy over an n-list with bounds"},
        {"risk-curve", "empirical risk and redundancy over an n-list with bounds"},
        {"gram-check", "eps1 across an m-sweep"}};
    for (const auto& [name, help] : experiments) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    ExperimentConfig cfg;
    try {
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw io_error("cannot open config: " + config_path);
            json j;
            in >> j;
            merge_json(cfg, j);
        }
        std::string chosen = app.get_subcommands().front()->get_name();
        for (auto& c : chosen)
            if (c == '-') c = '_';
        cfg.experiment = chosen;
        if (seed_flag) cfg.seed = *seed_flag;
        if (threads_flag) cfg.threads = *threads_flag;
        if (!out_path.empty()) cfg.output_path = out_path;
        validate(cfg);
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "invalid config: %s\n", e.what());
        return 2;
    } catch (const config_error& e) {
        std::fprintf(stderr, "invalid config: %s\n", e.what());
        return 2;
    } catch (const io_error& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 4;
    }

    try {
        dispatch(cfg);
    } catch (const config_error& e) {
        std::fprintf(stderr, "invalid config: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid config: %s\n", e.what());
        return 2;
    } catch (const io_error& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 4;
    } catch (const numerical_error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    }
    return 0;
}
