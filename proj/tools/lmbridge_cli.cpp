// Command line interface for landmark Brownian motion, guided bridges,
// transition density estimation and kernel parameter inference.
//
// Every command is deterministic: given the same inputs, flags and seed it
// produces byte-identical output files. Exit codes: 0 success, 2 invalid
// configuration or input files, 3 numerical failure (degenerate metric,
// failed estimate).

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lmbridge/lmbridge.hpp"

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration file handling

struct CliConfig {
    double alpha = 1.0;
    json sigma_spec;  // number or matrix; resolved once the dimension is known
    double T = 1.0;
    int n_steps = 100;
    int n_bridges = 100;    // J: bridges per density estimate
    int n_samples = 64;     // forward samples (sample, model-check)
    std::uint64_t master_seed = 0;
    lmbridge::OptimizerConfig optimizer;
};

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) known = true;
        if (!known) throw std::invalid_argument("unknown key '" + item.key() + "' in " + where);
    }
}

CliConfig load_config(const std::string& path) {
    CliConfig cfg;
    cfg.optimizer.n_bridges = cfg.n_bridges;
    if (path.empty()) return cfg;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
    json root = json::parse(f);  // json::exception on malformed input
    if (!root.is_object()) throw std::invalid_argument("config root must be a JSON object");
    check_keys(root, "config", {"kernel", "grid", "sampler", "optimizer"});

    if (root.contains("kernel")) {
        const json& k = root["kernel"];
        check_keys(k, "kernel", {"alpha", "sigma"});
        if (k.contains("alpha")) cfg.alpha = k["alpha"].get<double>();
        if (k.contains("sigma")) cfg.sigma_spec = k["sigma"];
    }
    if (root.contains("grid")) {
        const json& g = root["grid"];
        check_keys(g, "grid", {"T", "n_steps"});
        if (g.contains("T")) cfg.T = g["T"].get<double>();
        if (g.contains("n_steps")) cfg.n_steps = g["n_steps"].get<int>();
    }
    if (root.contains("sampler")) {
        const json& s = root["sampler"];
        check_keys(s, "sampler", {"J", "n_samples", "master_seed"});
        if (s.contains("J")) cfg.n_bridges = s["J"].get<int>();
        if (s.contains("n_samples")) cfg.n_samples = s["n_samples"].get<int>();
        if (s.contains("master_seed")) cfg.master_seed = s["master_seed"].get<std::uint64_t>();
    }
    if (root.contains("optimizer")) {
        const json& o = root["optimizer"];
        check_keys(o, "optimizer",
                   {"step_size", "max_iters", "convergence_tol", "fd_step", "max_backtracks", "optimize",
                    "sigma_diagonal_only"});
        if (o.contains("step_size")) cfg.optimizer.step_size = o["step_size"].get<double>();
        if (o.contains("max_iters")) cfg.optimizer.max_iters = o["max_iters"].get<int>();
        if (o.contains("convergence_tol")) cfg.optimizer.convergence_tol = o["convergence_tol"].get<double>();
        if (o.contains("fd_step")) cfg.optimizer.fd_step = o["fd_step"].get<double>();
        if (o.contains("max_backtracks")) cfg.optimizer.max_backtracks = o["max_backtracks"].get<int>();
        if (o.contains("sigma_diagonal_only"))
            cfg.optimizer.mask.sigma_diag_only = o["sigma_diagonal_only"].get<bool>();
        if (o.contains("optimize")) {
            lmbridge::ParamMask mask;
            mask.q0 = mask.alpha = mask.sigma = false;
            mask.sigma_diag_only = cfg.optimizer.mask.sigma_diag_only;
            for (const auto& name : o["optimize"]) {
                const std::string s = name.get<std::string>();
                if (s == "q0")
                    mask.q0 = true;
                else if (s == "alpha")
                    mask.alpha = true;
                else if (s == "sigma")
                    mask.sigma = true;
                else
                    throw std::invalid_argument("optimizer.optimize entries must be q0, alpha or sigma (got '" + s + "')");
            }
            cfg.optimizer.mask = mask;
        }
    }
    cfg.optimizer.n_bridges = cfg.n_bridges;
    return cfg;
}

// Kernel sigma for dimension d: missing -> fallback width, number -> width * I,
// matrix -> lower-triangular d x d.
lmbridge::KernelParams resolve_kernel(const CliConfig& cfg, int d, double fallback_width) {
    if (cfg.sigma_spec.is_null()) return lmbridge::KernelParams::isotropic(cfg.alpha, fallback_width, d);
    if (cfg.sigma_spec.is_number())
        return lmbridge::KernelParams::isotropic(cfg.alpha, cfg.sigma_spec.get<double>(), d);
    if (cfg.sigma_spec.is_array()) {
        Eigen::MatrixXd sigma(d, d);
        if (static_cast<int>(cfg.sigma_spec.size()) != d)
            throw std::invalid_argument("kernel.sigma matrix must be d x d for the data's dimension");
        for (int r = 0; r < d; ++r) {
            const json& row = cfg.sigma_spec[r];
            if (!row.is_array() || static_cast<int>(row.size()) != d)
                throw std::invalid_argument("kernel.sigma matrix must be d x d for the data's dimension");
            for (int c = 0; c < d; ++c) sigma(r, c) = row[c].get<double>();
        }
        return lmbridge::KernelParams(cfg.alpha, sigma);
    }
    throw std::invalid_argument("kernel.sigma must be a number or a d x d array");
}

// ---------------------------------------------------------------------------
// Small JSON / file helpers

json matrix_rows_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

json config_json(const lmbridge::LandmarkConfig& q) {
    return matrix_rows_json(q.positions());
}

json vector_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::MatrixXd json_to_matrix(const json& rows, const std::string& what) {
    if (!rows.is_array() || rows.empty() || !rows[0].is_array())
        throw std::invalid_argument(what + " must be an array of arrays");
    const int nr = static_cast<int>(rows.size());
    const int nc = static_cast<int>(rows[0].size());
    Eigen::MatrixXd m(nr, nc);
    for (int r = 0; r < nr; ++r) {
        if (!rows[r].is_array() || static_cast<int>(rows[r].size()) != nc)
            throw std::invalid_argument(what + " rows must all have the same length");
        for (int c = 0; c < nc; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
}

void write_json_file(const std::string& path, const json& value) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f << value.dump(2) << "\n";
    if (!f) throw std::runtime_error("failed while writing '" + path + "'");
}

// First row of a dataset file, as the configuration it describes.
lmbridge::LandmarkConfig load_single_config(const std::string& path) {
    const lmbridge::LandmarkDataset ds = lmbridge::load_dataset_csv(path);
    return ds.config(0);
}

std::string default_sibling(const std::string& path, const std::string& ext) {
    const std::size_t dot = path.find_last_of('.');
    const std::size_t slash = path.find_last_of("/\\");
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + ext;
    return path.substr(0, dot) + ext;
}

// Per-landmark mean and covariance across the rows of a dataset-shaped matrix.
struct LandmarkStats {
    Eigen::VectorXd mean;  // d
    Eigen::MatrixXd cov;   // d x d, unbiased
};

std::vector<LandmarkStats> per_landmark_stats(const Eigen::MatrixXd& rows, int n_landmarks, int d) {
    const Eigen::Index m = rows.rows();
    std::vector<LandmarkStats> out(n_landmarks);
    for (int i = 0; i < n_landmarks; ++i) {
        const Eigen::MatrixXd block = rows.middleCols(static_cast<Eigen::Index>(i) * d, d);
        LandmarkStats st;
        st.mean = block.colwise().mean().transpose();
        Eigen::MatrixXd centered = block.rowwise() - st.mean.transpose();
        st.cov = (m > 1) ? Eigen::MatrixXd((centered.transpose() * centered) / static_cast<double>(m - 1))
                         : Eigen::MatrixXd::Zero(d, d);
        out[i] = std::move(st);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<double> T;
    std::optional<int> samples;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_samples = true) {
    cmd->add_option("--config", o.config_path, "JSON configuration file");
    cmd->add_option("--seed", o.seed, "master seed (overrides config)");
    cmd->add_option("--steps", o.steps, "time steps (overrides config)");
    cmd->add_option("--T", o.T, "time horizon (overrides config)");
    if (with_samples) cmd->add_option("-J,--samples", o.samples, "sample count (overrides config)");
}

CliConfig effective_config(const CommonOpts& o) {
    CliConfig cfg = load_config(o.config_path);
    if (o.seed) cfg.master_seed = *o.seed;
    if (o.steps) cfg.n_steps = *o.steps;
    if (o.T) cfg.T = *o.T;
    if (o.samples) {
        cfg.n_bridges = *o.samples;
        cfg.n_samples = *o.samples;
        cfg.optimizer.n_bridges = *o.samples;
    }
    return cfg;
}

int cmd_make_ellipse(int n, double a, double b, double cx, double cy, const std::string& out) {
    const lmbridge::LandmarkConfig q = lmbridge::make_ellipse(n, a, b, cx, cy);
    lmbridge::save_dataset_csv(out, lmbridge::LandmarkDataset::from_configs({q}));
    return 0;
}

int cmd_make_cshape(int configs, int landmarks, double noise, std::uint64_t seed, const std::string& out) {
    lmbridge::save_dataset_csv(out, lmbridge::make_cshape_set(configs, landmarks, noise, seed));
    return 0;
}

int cmd_sample(const CommonOpts& common, const std::string& q0_path, const std::string& out,
               const std::string& traj_path) {
    const CliConfig cfg = effective_config(common);
    const lmbridge::LandmarkConfig q0 = load_single_config(q0_path);
    const lmbridge::KernelParams kernel = resolve_kernel(cfg, q0.dim(), 1.0);
    const lmbridge::TimeGrid grid(cfg.T, cfg.n_steps);

    std::vector<lmbridge::LandmarkConfig> endpoints;
    std::vector<std::string> labels;
    std::ofstream traj;
    if (!traj_path.empty()) {
        traj.open(traj_path, std::ios::binary);
        if (!traj) throw std::runtime_error("cannot open '" + traj_path + "' for writing");
        traj << "# N=" << q0.n_landmarks() << " d=" << q0.dim() << "\n";
        traj << "sample,step,t," << lmbridge::dataset_header(q0.n_landmarks(), q0.dim(), false) << "\n";
    }
    for (int i = 0; i < cfg.n_samples; ++i) {
        lmbridge::RowMatrixXd path;
        try {
            path = lmbridge::simulate_brownian(q0, grid, kernel,
                                               lmbridge::derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(i)}));
        } catch (const lmbridge::DegenerateMetricError& err) {
            std::cerr << "warning: sample " << i << " aborted: " << err.what() << "\n";
            continue;
        }
        endpoints.push_back(lmbridge::LandmarkConfig::from_flat(path.row(grid.n_steps).transpose(), q0.n_landmarks(),
                                                                q0.dim()));
        labels.push_back(std::to_string(i));
        if (traj.is_open()) {
            for (int k = 0; k <= grid.n_steps; ++k) {
                traj << i << "," << k << "," << lmbridge::detail::format_double(grid.t(k));
                for (int c = 0; c < q0.flat_size(); ++c)
                    traj << "," << lmbridge::detail::format_double(path(k, c));
                traj << "\n";
            }
        }
    }
    if (endpoints.empty()) throw lmbridge::EstimationFailedError("every sample aborted with a degenerate metric");
    lmbridge::LandmarkDataset ds = lmbridge::LandmarkDataset::from_configs(endpoints);
    ds.labels = std::move(labels);
    lmbridge::save_dataset_csv(out, ds);
    return 0;
}

int cmd_bridge(const CommonOpts& common, const std::string& q0_path, const std::string& target_path,
               const std::string& out, std::string sidecar) {
    const CliConfig cfg = effective_config(common);
    const lmbridge::LandmarkConfig q0 = load_single_config(q0_path);
    const lmbridge::LandmarkConfig v = load_single_config(target_path);
    const lmbridge::KernelParams kernel = resolve_kernel(cfg, q0.dim(), 1.0);
    const lmbridge::TimeGrid grid(cfg.T, cfg.n_steps);

    const lmbridge::BridgePath bridge = lmbridge::simulate_bridge(q0, v, grid, kernel, cfg.master_seed);

    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + out + "' for writing");
    f << "# N=" << q0.n_landmarks() << " d=" << q0.dim() << "\n";
    f << "step,t," << lmbridge::dataset_header(q0.n_landmarks(), q0.dim(), false) << "\n";
    for (int k = 0; k <= grid.n_steps; ++k) {
        f << k << "," << lmbridge::detail::format_double(grid.t(k));
        for (int c = 0; c < q0.flat_size(); ++c) f << "," << lmbridge::detail::format_double(bridge.path(k, c));
        f << "\n";
    }
    if (!f) throw std::runtime_error("failed while writing '" + out + "'");

    if (sidecar.empty()) sidecar = default_sibling(out, ".json");
    write_json_file(sidecar, json{{"log_phi", bridge.log_phi},
                                  {"n_steps", grid.n_steps},
                                  {"T", grid.T},
                                  {"seed", bridge.seed}});
    return 0;
}

int cmd_density(const CommonOpts& common, const std::string& q0_path, const std::string& target_path,
                const std::string& out) {
    const CliConfig cfg = effective_config(common);
    const lmbridge::LandmarkConfig q0 = load_single_config(q0_path);
    const lmbridge::LandmarkConfig v = load_single_config(target_path);
    const lmbridge::KernelParams kernel = resolve_kernel(cfg, q0.dim(), 1.0);
    const lmbridge::TimeGrid grid(cfg.T, cfg.n_steps);

    const lmbridge::DensityEstimate est =
        lmbridge::estimate_density(q0, v, grid, kernel, cfg.n_bridges, cfg.master_seed);
    const json result{{"log_value", est.log_value}, {"value", est.value},     {"std_error", est.std_error},
                      {"n_samples", est.n_samples}, {"n_aborted", est.n_aborted}, {"J", cfg.n_bridges},
                      {"n_steps", grid.n_steps},    {"T", grid.T},           {"seed", cfg.master_seed}};
    if (out.empty())
        std::cout << result.dump(2) << "\n";
    else
        write_json_file(out, result);
    return 0;
}

json theta_json(const lmbridge::ThetaParams& theta) {
    return json{{"q0", config_json(theta.q0)},
                {"alpha", theta.kernel.alpha},
                {"sigma", matrix_rows_json(theta.kernel.sigma)}};
}

int cmd_infer(const CommonOpts& common, const std::string& data_path, const std::string& q0_path,
              const std::string& out) {
    const CliConfig cfg = effective_config(common);
    const lmbridge::LandmarkDataset data = lmbridge::load_dataset_csv(data_path);
    const std::vector<lmbridge::LandmarkConfig> observations = data.configs();

    const lmbridge::LandmarkConfig q0_init =
        q0_path.empty() ? lmbridge::pointwise_mean(data) : load_single_config(q0_path);
    if (q0_init.n_landmarks() != data.n_landmarks || q0_init.dim() != data.dim)
        throw std::invalid_argument("initial q0 shape does not match the data");
    // Kernel width defaults to the mean inter-landmark distance of the
    // initial configuration when the config file does not pin sigma.
    const double fallback_width =
        data.n_landmarks > 1 ? lmbridge::average_interpoint_distance(q0_init) : 1.0;
    const lmbridge::KernelParams kernel = resolve_kernel(cfg, data.dim, fallback_width);
    const lmbridge::TimeGrid grid(cfg.T, cfg.n_steps);

    lmbridge::OptimizerConfig opt = cfg.optimizer;
    opt.master_seed = cfg.master_seed;

    const lmbridge::InferenceResult res =
        lmbridge::infer(observations, lmbridge::ThetaParams{q0_init, kernel}, grid, opt);

    json trace = json::array();
    for (const auto& rec : res.trace) {
        trace.push_back(json{{"iteration", rec.iteration},
                             {"log_lik_before", rec.log_lik_before},
                             {"log_lik_after", rec.log_lik_after},
                             {"grad_norm", rec.grad_norm},
                             {"step", rec.step_used},
                             {"accepted", rec.accepted},
                             {"alpha", rec.alpha},
                             {"sigma", matrix_rows_json(rec.sigma)},
                             {"q0", matrix_rows_json(Eigen::Map<const lmbridge::RowMatrixXd>(
                                  rec.q0_flat.data(), data.n_landmarks, data.dim))},
                             {"density_std_errors", rec.density_std_errors}});
    }
    write_json_file(out, json{{"theta_hat", theta_json(res.theta)},
                              {"converged", res.converged},
                              {"message", res.message},
                              {"trace", trace},
                              {"n_observations", static_cast<int>(observations.size())},
                              {"grid", json{{"T", grid.T}, {"n_steps", grid.n_steps}}},
                              {"J", opt.n_bridges},
                              {"seed", cfg.master_seed}});
    return 0;
}

int cmd_model_check(const CommonOpts& common, const std::string& data_path, const std::string& theta_path,
                    const std::string& out, std::string csv_path) {
    const CliConfig cfg = effective_config(common);
    const lmbridge::LandmarkDataset data = lmbridge::load_dataset_csv(data_path);

    std::ifstream tf(theta_path, std::ios::binary);
    if (!tf) throw std::runtime_error("cannot open theta file '" + theta_path + "'");
    json troot = json::parse(tf);
    if (troot.contains("theta_hat")) troot = troot["theta_hat"];
    const Eigen::MatrixXd q0_mat = json_to_matrix(troot.at("q0"), "theta q0");
    if (q0_mat.rows() != data.n_landmarks || q0_mat.cols() != data.dim)
        throw std::invalid_argument("theta q0 shape does not match the data");
    const lmbridge::LandmarkConfig q0{lmbridge::RowMatrixXd(q0_mat)};
    const lmbridge::KernelParams kernel(troot.at("alpha").get<double>(),
                                        json_to_matrix(troot.at("sigma"), "theta sigma"));
    if (kernel.dim() != data.dim) throw std::invalid_argument("theta sigma dimension does not match the data");
    const lmbridge::TimeGrid grid(cfg.T, cfg.n_steps);

    // Re-simulate the model at theta and compare per-landmark summary
    // statistics of the simulated endpoints against the data.
    std::vector<Eigen::VectorXd> endpoints;
    for (int i = 0; i < cfg.n_samples; ++i) {
        try {
            const lmbridge::RowMatrixXd path = lmbridge::simulate_brownian(
                q0, grid, kernel, lmbridge::derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(i)}));
            endpoints.push_back(path.row(grid.n_steps).transpose());
        } catch (const lmbridge::DegenerateMetricError& err) {
            std::cerr << "warning: sample " << i << " aborted: " << err.what() << "\n";
        }
    }
    if (endpoints.empty()) throw lmbridge::EstimationFailedError("every model sample aborted with a degenerate metric");
    Eigen::MatrixXd sim(static_cast<Eigen::Index>(endpoints.size()), data.data.cols());
    for (std::size_t r = 0; r < endpoints.size(); ++r) sim.row(static_cast<Eigen::Index>(r)) = endpoints[r];

    const std::vector<LandmarkStats> data_stats = per_landmark_stats(data.data, data.n_landmarks, data.dim);
    const std::vector<LandmarkStats> sim_stats = per_landmark_stats(sim, data.n_landmarks, data.dim);

    json landmarks = json::array();
    for (int i = 0; i < data.n_landmarks; ++i) {
        landmarks.push_back(json{{"index", i},
                                 {"data", json{{"mean", vector_json(data_stats[i].mean)},
                                               {"cov", matrix_rows_json(data_stats[i].cov)}}},
                                 {"simulated", json{{"mean", vector_json(sim_stats[i].mean)},
                                                    {"cov", matrix_rows_json(sim_stats[i].cov)}}}});
    }
    write_json_file(out, json{{"landmarks", landmarks},
                              {"n_data", data.n_rows()},
                              {"n_simulated", static_cast<int>(endpoints.size())},
                              {"grid", json{{"T", grid.T}, {"n_steps", grid.n_steps}}},
                              {"seed", cfg.master_seed}});

    if (csv_path.empty()) csv_path = default_sibling(out, ".csv");
    std::ofstream cf(csv_path, std::ios::binary);
    if (!cf) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
    cf << "landmark,source";
    for (int a = 0; a < data.dim; ++a) cf << ",mean_" << lmbridge::detail::axis_name(a);
    for (int a = 0; a < data.dim; ++a)
        for (int b = a; b < data.dim; ++b)
            cf << ",cov_" << lmbridge::detail::axis_name(a) << lmbridge::detail::axis_name(b);
    cf << "\n";
    auto write_row = [&](int i, const char* source, const LandmarkStats& st) {
        cf << i << "," << source;
        for (int a = 0; a < data.dim; ++a) cf << "," << lmbridge::detail::format_double(st.mean(a));
        for (int a = 0; a < data.dim; ++a)
            for (int b = a; b < data.dim; ++b) cf << "," << lmbridge::detail::format_double(st.cov(a, b));
        cf << "\n";
    };
    for (int i = 0; i < data.n_landmarks; ++i) {
        write_row(i, "data", data_stats[i]);
        write_row(i, "simulated", sim_stats[i]);
    }
    if (!cf) throw std::runtime_error("failed while writing '" + csv_path + "'");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Brownian motion, guided bridges and kernel parameter estimation on landmark manifolds"};
    app.require_subcommand(1);

    // make-ellipse
    auto* ellipse = app.add_subcommand("make-ellipse", "write a single elliptic landmark configuration");
    int el_n = 10;
    double el_a = 1.0, el_b = 0.5, el_cx = 0.0, el_cy = 0.0;
    std::string el_out;
    ellipse->add_option("--landmarks", el_n, "number of landmarks")->capture_default_str();
    ellipse->add_option("--a", el_a, "semi-axis along x")->capture_default_str();
    ellipse->add_option("--b", el_b, "semi-axis along y")->capture_default_str();
    ellipse->add_option("--cx", el_cx, "center x")->capture_default_str();
    ellipse->add_option("--cy", el_cy, "center y")->capture_default_str();
    ellipse->add_option("--out", el_out, "output CSV")->required();

    // make-cshape
    auto* cshape = app.add_subcommand("make-cshape", "write noisy C-shaped outline configurations");
    int cs_configs = 14, cs_landmarks = 17;
    double cs_noise = 0.05;
    std::uint64_t cs_seed = 0;
    std::string cs_out;
    cshape->add_option("--configs", cs_configs, "number of configurations")->capture_default_str();
    cshape->add_option("--landmarks", cs_landmarks, "landmarks per configuration")->capture_default_str();
    cshape->add_option("--noise", cs_noise, "Gaussian perturbation scale")->capture_default_str();
    cshape->add_option("--seed", cs_seed, "seed")->capture_default_str();
    cshape->add_option("--out", cs_out, "output CSV")->required();

    // sample
    auto* sample = app.add_subcommand("sample", "simulate Brownian motion samples from q0");
    CommonOpts sample_common;
    std::string sample_q0, sample_out, sample_traj;
    add_common(sample, sample_common);
    sample->add_option("--q0", sample_q0, "starting configuration CSV (first row)")->required();
    sample->add_option("--out", sample_out, "endpoint CSV")->required();
    sample->add_option("--trajectories", sample_traj, "also write every path to this CSV");

    // bridge
    auto* bridge = app.add_subcommand("bridge", "simulate one guided bridge from q0 to a target");
    CommonOpts bridge_common;
    std::string bridge_q0, bridge_target, bridge_out, bridge_sidecar;
    add_common(bridge, bridge_common, false);
    bridge->add_option("--q0", bridge_q0, "starting configuration CSV (first row)")->required();
    bridge->add_option("--target", bridge_target, "target configuration CSV (first row)")->required();
    bridge->add_option("--out", bridge_out, "path CSV")->required();
    bridge->add_option("--sidecar", bridge_sidecar, "sidecar JSON (default: out with .json)");

    // density
    auto* density = app.add_subcommand("density", "estimate the transition density q0 -> target");
    CommonOpts density_common;
    std::string density_q0, density_target, density_out;
    add_common(density, density_common);
    density->add_option("--q0", density_q0, "starting configuration CSV (first row)")->required();
    density->add_option("--target", density_target, "target configuration CSV (first row)")->required();
    density->add_option("--out", density_out, "result JSON (default: stdout)");

    // infer
    auto* infer = app.add_subcommand("infer", "maximum likelihood estimation of (q0, alpha, sigma)");
    CommonOpts infer_common;
    std::string infer_data, infer_q0, infer_out;
    add_common(infer, infer_common);
    infer->add_option("--data", infer_data, "observed configurations CSV")->required();
    infer->add_option("--q0", infer_q0, "initial q0 CSV (default: pointwise mean of the data)");
    infer->add_option("--out", infer_out, "result JSON")->required();

    // model-check
    auto* check = app.add_subcommand("model-check", "compare data statistics against re-simulated data");
    CommonOpts check_common;
    std::string check_data, check_theta, check_out, check_csv;
    add_common(check, check_common);
    check->add_option("--data", check_data, "observed configurations CSV")->required();
    check->add_option("--theta", check_theta, "parameter JSON (as written by infer)")->required();
    check->add_option("--out", check_out, "summary JSON")->required();
    check->add_option("--csv", check_csv, "summary CSV (default: out with .csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    }

    try {
        if (ellipse->parsed()) return cmd_make_ellipse(el_n, el_a, el_b, el_cx, el_cy, el_out);
        if (cshape->parsed()) return cmd_make_cshape(cs_configs, cs_landmarks, cs_noise, cs_seed, cs_out);
        if (sample->parsed()) return cmd_sample(sample_common, sample_q0, sample_out, sample_traj);
        if (bridge->parsed()) return cmd_bridge(bridge_common, bridge_q0, bridge_target, bridge_out, bridge_sidecar);
        if (density->parsed()) return cmd_density(density_common, density_q0, density_target, density_out);
        if (infer->parsed()) return cmd_infer(infer_common, infer_data, infer_q0, infer_out);
        if (check->parsed()) return cmd_model_check(check_common, check_data, check_theta, check_out, check_csv);
    } catch (const lmbridge::DegenerateMetricError& e) {
        std::cerr << "error: numerical: " << e.what() << "\n";
        return 3;
    } catch (const lmbridge::EstimationFailedError& e) {
        std::cerr << "error: numerical: " << e.what() << "\n";
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
