// Landmark configurations: N points in R^d with a flat coordinate view.
#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace lmbridge {

// Row-major so that positions().data() is the landmark-major flat vector:
// landmark i occupies flat entries [i*d, (i+1)*d).
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Immutable configuration of n_landmarks() points in dim() dimensions.
class LandmarkConfig {
public:
    explicit LandmarkConfig(const RowMatrixXd& positions) : positions_(positions) {
        if (positions_.rows() < 1 || positions_.cols() < 1)
            throw std::invalid_argument("landmark configuration must have at least one landmark and one dimension");
        if (!positions_.allFinite())
            throw std::invalid_argument("landmark configuration contains non-finite coordinates");
    }

    // Reassembles a configuration from a landmark-major flat vector.
    static LandmarkConfig from_flat(const Eigen::VectorXd& flat, int n_landmarks, int dim) {
        if (n_landmarks < 1 || dim < 1 || flat.size() != static_cast<Eigen::Index>(n_landmarks) * dim)
            throw std::invalid_argument("flat vector size does not match n_landmarks * dim");
        RowMatrixXd m(n_landmarks, dim);
        Eigen::VectorXd::Map(m.data(), flat.size()) = flat;
        return LandmarkConfig(m);
    }

    int n_landmarks() const { return static_cast<int>(positions_.rows()); }
    int dim() const { return static_cast<int>(positions_.cols()); }
    int flat_size() const { return static_cast<int>(positions_.size()); }

    const RowMatrixXd& positions() const { return positions_; }

    // Landmark-major flat view of the coordinates (no copy).
    Eigen::Map<const Eigen::VectorXd> flat() const {
        return Eigen::Map<const Eigen::VectorXd>(positions_.data(), positions_.size());
    }

private:
    RowMatrixXd positions_;
};

}  // namespace lmbridge
