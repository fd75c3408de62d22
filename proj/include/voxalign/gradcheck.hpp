#pragma once

// Finite-difference verification of the analytic training gradient, both at
// the loss/embedding level and end to end through windowing and the student.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace voxalign {

struct GradcheckOptions {
    std::size_t trials = 24;
    std::uint64_t seed = 0;
    double step = 1e-5;       // central-difference half width
    double tolerance = 1e-4;  // max relative error allowed
    /// Relative error is |a - f| / max(|a|, |f|, floor).
    double floor = 1e-6;
    /// Test hook: negate the analytic gradient before comparing.
    bool flip_sign = false;
};

struct GradcheckTrial {
    std::size_t batch_size = 0;
    std::size_t embed_dim = 0;
    double lambda = 0.0;
    double temperature = 1.0;
    double embedding_max_rel_error = 0.0;
    double parameter_max_rel_error = 0.0;
    std::string worst_coordinate;  // human-readable location of the worst error
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradcheckReport {
    std::vector<GradcheckTrial> trials;
    double max_rel_error = 0.0;
    std::size_t worst_trial = 0;
    bool passed = false;
};

/// Trial i uses batch size {2,4,8}, embedding width {8,16} and lambda {0,0.5,1}
/// from a fixed 18-entry grid (cycled), with temperature 1 on the grid pass
/// and a random temperature in [0.5, 2] afterwards.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

double relative_error(double analytic, double numeric, double floor);

}  // namespace voxalign
