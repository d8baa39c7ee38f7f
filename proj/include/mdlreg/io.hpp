#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mdlreg/errors.hpp"
#include "mdlreg/estimator.hpp"
#include "mdlreg/model.hpp"
#include "mdlreg/spectral.hpp"
#include "mdlreg/twostage.hpp"

namespace mdlreg {

// Model file: JSON object {d, m, sigma2, W: row-major array, seed}.
inline nlohmann::json model_to_json(const NetworkModel& model) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(model.d) * model.m);
    for (int r = 0; r < model.d; ++r)
        for (int c = 0; c < model.m; ++c) w.push_back(model.W(r, c));
    return nlohmann::json{{"d", model.d},
                          {"m", model.m},
                          {"sigma2", model.sigma2},
                          {"W", w},
                          {"seed", model.seed}};
}

inline NetworkModel model_from_json(const nlohmann::json& j) {
    NetworkModel model;
    model.d = j.at("d").get<int>();
    model.m = j.at("m").get<int>();
    model.sigma2 = j.at("sigma2").get<double>();
    model.seed = j.at("seed").get<std::uint64_t>();
    const auto w = j.at("W").get<std::vector<double>>();
    if (static_cast<long>(w.size()) != static_cast<long>(model.d) * model.m)
        throw io_error("model_from_json: W size does not match d*m");
    model.W.resize(model.d, model.m);
    for (int r = 0; r < model.d; ++r)
        for (int c = 0; c < model.m; ++c)
            model.W(r, c) = w[static_cast<std::size_t>(r) * model.m + c];
    return model;
}

inline void save_model_json(const std::string& path, const NetworkModel& model) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << model_to_json(model).dump(2) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

inline NetworkModel load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open for reading: " + path);
    nlohmann::json j;
    try {
        in >> j;
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw io_error("invalid model file " + path + ": " + e.what());
    }
}

// Dataset file: CSV with header t,x_1..x_d,y. Features are recomputed from
// the model on load, never stored.
inline void save_dataset_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << "t";
    for (int j = 0; j < data.inputs.cols(); ++j) out << ",x_" << (j + 1);
    out << ",y\n";
    char buf[40];
    for (long t = 0; t < data.n; ++t) {
        out << (t + 1);
        for (int j = 0; j < data.inputs.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", data.inputs(t, j));
            out << ',' << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g", data.responses(t));
        out << ',' << buf << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

inline Dataset load_dataset_csv(const std::string& path, const NetworkModel& model) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw io_error("empty dataset file: " + path);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> fields;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) fields.push_back(std::stod(cell));
        if (static_cast<int>(fields.size()) != model.d + 2)
            throw io_error("dataset row has wrong column count: " + path);
        rows.push_back(std::move(fields));
    }
    if (rows.empty()) throw io_error("dataset has no rows: " + path);
    Dataset data;
    data.n = static_cast<long>(rows.size());
    data.inputs.resize(data.n, model.d);
    data.responses.resize(data.n);
    for (long t = 0; t < data.n; ++t) {
        for (int j = 0; j < model.d; ++j) data.inputs(t, j) = rows[t][j + 1];
        data.responses(t) = rows[t][static_cast<std::size_t>(model.d) + 1];
    }
    data.features = relu_features(data.inputs, model.W);
    return data;
}

// Spectrum / Gram export: {eigenvalues, trace, D, eps1, beta_at_D}.
inline nlohmann::json spectrum_report_json(const Spectrum& spectrum, int D, double beta_at_D,
                                           double eps1 = -1.0) {
    nlohmann::json j;
    j["eigenvalues"] = std::vector<double>(
        spectrum.eigenvalues.data(), spectrum.eigenvalues.data() + spectrum.eigenvalues.size());
    j["trace"] = spectrum.trace;
    j["D"] = D;
    j["beta_at_D"] = beta_at_D;
    if (eps1 >= 0.0)
        j["eps1"] = eps1;
    else
        j["eps1"] = nullptr;
    return j;
}

// CodeSpec export: {alpha, sigma2, n, D, radius, directions: [...]}.
inline nlohmann::json code_spec_json(const CodeSpec& spec) {
    nlohmann::json dirs = nlohmann::json::array();
    for (const auto& dir : spec.directions)
        dirs.push_back(nlohmann::json{{"lambda", dir.lambda},
                                      {"delta", dir.delta},
                                      {"q", dir.q},
                                      {"length_nats", dir.length_nats}});
    return nlohmann::json{{"alpha", spec.alpha}, {"sigma2", spec.sigma2}, {"n", spec.n},
                          {"D", spec.D},         {"radius", spec.radius}, {"directions", dirs}};
}

// MdlEstimate export.
inline nlohmann::json estimate_json(const MdlEstimate& est) {
    auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    return nlohmann::json{{"theta_hat", vec(est.theta_hat)},
                          {"theta_ddot", vec(est.theta_ddot)},
                          {"objective", est.objective},
                          {"neg_log_lik", est.neg_log_lik},
                          {"code_length_nats", est.code_length_nats},
                          {"method", to_string(est.method)},
                          {"clamped", est.clamped}};
}

// Row-major binary matrix dump with a 16-byte header: magic "FIMJ",
// u32 version, u32 rows, u32 cols, then rows*cols little-endian doubles.
inline void write_matrix_binary(const std::string& path, const Eigen::MatrixXd& M) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    const char magic[4] = {'F', 'I', 'M', 'J'};
    const std::uint32_t version = 1;
    const std::uint32_t rows = static_cast<std::uint32_t>(M.rows());
    const std::uint32_t cols = static_cast<std::uint32_t>(M.cols());
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    std::vector<double> row(M.cols());
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) row[static_cast<std::size_t>(c)] = M(r, c);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!out) throw io_error("write failed: " + path);
}

inline Eigen::MatrixXd read_matrix_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open for reading: " + path);
    char magic[4];
    std::uint32_t version = 0, rows = 0, cols = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    if (!in || magic[0] != 'F' || magic[1] != 'I' || magic[2] != 'M' || magic[3] != 'J')
        throw io_error("bad matrix header: " + path);
    if (version != 1) throw io_error("unsupported matrix version: " + path);
    Eigen::MatrixXd M(rows, cols);
    std::vector<double> row(cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in) throw io_error("truncated matrix file: " + path);
        for (std::uint32_t c = 0; c < cols; ++c) M(r, c) = row[c];
    }
    return M;
}

}  // namespace mdlreg
