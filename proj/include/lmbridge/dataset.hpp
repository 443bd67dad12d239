// Datasets of landmark configurations: CSV round-trip and synthetic shapes.
//
// File format: one configuration per row, landmark-major columns named
// q<i>_<axis> (axes x, y, z, then numeric). The first line is a shape
// comment `# N=<n> d=<d>`, the second the column header; an optional leading
// `label` column carries free-text row names. Values are written with 17
// significant digits so a read back reproduces every double bit for bit.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lmbridge/landmark.hpp"
#include "lmbridge/rng.hpp"

namespace lmbridge {

struct LandmarkDataset {
    int n_landmarks = 0;
    int dim = 0;
    RowMatrixXd data;                 // rows x (N*d), landmark-major
    std::vector<std::string> labels;  // empty, or one per row

    int n_rows() const { return static_cast<int>(data.rows()); }

    LandmarkConfig config(int row) const {
        return LandmarkConfig::from_flat(data.row(row).transpose(), n_landmarks, dim);
    }

    std::vector<LandmarkConfig> configs() const {
        std::vector<LandmarkConfig> out;
        out.reserve(n_rows());
        for (int r = 0; r < n_rows(); ++r) out.push_back(config(r));
        return out;
    }

    static LandmarkDataset from_configs(const std::vector<LandmarkConfig>& configs) {
        if (configs.empty()) throw std::invalid_argument("dataset needs at least one configuration");
        LandmarkDataset ds;
        ds.n_landmarks = configs[0].n_landmarks();
        ds.dim = configs[0].dim();
        ds.data.resize(static_cast<Eigen::Index>(configs.size()), configs[0].flat_size());
        for (std::size_t r = 0; r < configs.size(); ++r) {
            if (configs[r].n_landmarks() != ds.n_landmarks || configs[r].dim() != ds.dim)
                throw std::invalid_argument("all configurations in a dataset must have the same shape");
            ds.data.row(static_cast<Eigen::Index>(r)) = configs[r].flat();
        }
        return ds;
    }
};

namespace detail {

inline std::string axis_name(int a) {
    static const char* named[] = {"x", "y", "z"};
    if (a < 3) return named[a];
    return std::to_string(a);
}

// Decimal form that reads back to exactly the same double.
inline std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace detail

inline std::string dataset_header(int n_landmarks, int dim, bool with_label) {
    std::string header = with_label ? "label" : "";
    for (int i = 0; i < n_landmarks; ++i)
        for (int a = 0; a < dim; ++a) {
            if (!header.empty()) header += ",";
            header += "q" + std::to_string(i) + "_" + detail::axis_name(a);
        }
    return header;
}

inline void save_dataset_csv(std::ostream& out, const LandmarkDataset& ds) {
    const bool with_label = !ds.labels.empty();
    if (with_label && ds.labels.size() != static_cast<std::size_t>(ds.n_rows()))
        throw std::invalid_argument("label count does not match row count");
    out << "# N=" << ds.n_landmarks << " d=" << ds.dim << "\n";
    out << dataset_header(ds.n_landmarks, ds.dim, with_label) << "\n";
    for (int r = 0; r < ds.n_rows(); ++r) {
        if (with_label) out << ds.labels[r] << ",";
        for (int c = 0; c < ds.data.cols(); ++c) {
            if (c) out << ",";
            out << detail::format_double(ds.data(r, c));
        }
        out << "\n";
    }
}

inline void save_dataset_csv(const std::string& path, const LandmarkDataset& ds) {
    std::ofstream f(path, std::ios::binary);  // binary: LF line endings everywhere
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    save_dataset_csv(f, ds);
    if (!f) throw std::runtime_error("failed while writing '" + path + "'");
}

inline LandmarkDataset load_dataset_csv(std::istream& in, const std::string& origin = "<stream>") {
    auto fail = [&origin](const std::string& why) -> void {
        throw std::runtime_error("malformed dataset file '" + origin + "': " + why);
    };

    std::string line;
    if (!std::getline(in, line)) fail("empty file");
    int n = 0, d = 0;
    if (std::sscanf(line.c_str(), "# N=%d d=%d", &n, &d) != 2 || n < 1 || d < 1)
        fail("first line must be a shape comment '# N=<n> d=<d>'");

    if (!std::getline(in, line)) fail("missing column header");
    const bool with_label = line.rfind("label", 0) == 0;
    if (line != dataset_header(n, d, with_label)) fail("column header does not match the declared shape");

    LandmarkDataset ds;
    ds.n_landmarks = n;
    ds.dim = d;
    std::vector<double> values;
    std::vector<std::string> labels;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        const std::size_t expected = static_cast<std::size_t>(n) * d + (with_label ? 1 : 0);
        if (fields.size() != expected) fail("row " + std::to_string(rows) + " has " + std::to_string(fields.size()) +
                                            " fields, expected " + std::to_string(expected));
        std::size_t start = 0;
        if (with_label) {
            labels.push_back(fields[0]);
            start = 1;
        }
        for (std::size_t c = start; c < fields.size(); ++c) {
            std::size_t used = 0;
            double value = 0.0;
            try {
                value = std::stod(fields[c], &used);
            } catch (const std::exception&) {
                fail("row " + std::to_string(rows) + ": '" + fields[c] + "' is not a number");
            }
            if (used != fields[c].size()) fail("row " + std::to_string(rows) + ": trailing characters in '" + fields[c] + "'");
            if (!std::isfinite(value)) fail("row " + std::to_string(rows) + ": non-finite value");
            values.push_back(value);
        }
        ++rows;
    }
    if (rows == 0) fail("no data rows");
    ds.data.resize(rows, static_cast<Eigen::Index>(n) * d);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < n * d; ++c) ds.data(r, c) = values[static_cast<std::size_t>(r) * n * d + c];
    ds.labels = std::move(labels);
    return ds;
}

inline LandmarkDataset load_dataset_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset file '" + path + "'");
    return load_dataset_csv(f, path);
}

// Pointwise (per-coordinate) mean configuration of a dataset.
inline LandmarkConfig pointwise_mean(const LandmarkDataset& ds) {
    Eigen::VectorXd mean = ds.data.colwise().mean().transpose();
    return LandmarkConfig::from_flat(mean, ds.n_landmarks, ds.dim);
}

// Mean Euclidean distance over all unordered landmark pairs; a data-driven
// default for the kernel width.
inline double average_interpoint_distance(const LandmarkConfig& q) {
    const int n = q.n_landmarks();
    if (n < 2) throw std::invalid_argument("average inter-point distance needs at least two landmarks");
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            sum += (q.positions().row(i) - q.positions().row(j)).norm();
            ++count;
        }
    return sum / count;
}

// n landmarks equally spaced in angle on an axis-aligned ellipse.
inline LandmarkConfig make_ellipse(int n_landmarks, double a, double b, double cx, double cy) {
    if (n_landmarks < 3) throw std::invalid_argument("an ellipse needs at least three landmarks");
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
        throw std::invalid_argument("ellipse semi-axes must be finite and positive");
    RowMatrixXd pos(n_landmarks, 2);
    for (int i = 0; i < n_landmarks; ++i) {
        const double angle = 2.0 * std::numbers::pi * i / n_landmarks;
        pos(i, 0) = cx + a * std::cos(angle);
        pos(i, 1) = cy + b * std::sin(angle);
    }
    return LandmarkConfig(pos);
}

// Synthetic stand-in for segmented anatomical outlines: configurations of
// landmarks on an open C-shaped arc (270 degrees of the unit circle), each
// perturbed by independent Gaussian noise. Configuration r uses the stream
// derive_seed(seed, {r}).
inline LandmarkDataset make_cshape_set(int n_configs, int n_landmarks, double noise, std::uint64_t seed) {
    if (n_configs < 1) throw std::invalid_argument("need at least one configuration");
    if (n_landmarks < 3) throw std::invalid_argument("a C-shape needs at least three landmarks");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw std::invalid_argument("noise scale must be finite and non-negative");
    const double start = std::numbers::pi / 4.0;
    const double span = 1.5 * std::numbers::pi;
    LandmarkDataset ds;
    ds.n_landmarks = n_landmarks;
    ds.dim = 2;
    ds.data.resize(n_configs, 2 * n_landmarks);
    for (int r = 0; r < n_configs; ++r) {
        NormalSampler normal(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
        for (int i = 0; i < n_landmarks; ++i) {
            const double angle = start + span * i / (n_landmarks - 1);
            ds.data(r, 2 * i) = std::cos(angle) + noise * normal();
            ds.data(r, 2 * i + 1) = std::sin(angle) + noise * normal();
        }
    }
    return ds;
}

}  // namespace lmbridge
