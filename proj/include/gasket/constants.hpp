#pragma once

#include <cmath>

namespace gasket {

/// Dimensions of the Sierpinski gasket.
struct Constants {
    /// spectral dimension 2 ln3 / ln5
    double d_s;
    /// walk dimension ln5 / ln2
    double d_w;
    /// Hausdorff dimension ln3 / ln2
    double d_f;
    /// ln3 / ln(5/3), so that 5/3 = 3^(1/delta_s)
    double delta_s;
};

inline const Constants& constants() {
    static const Constants c{
        2.0 * std::log(3.0) / std::log(5.0),
        std::log(5.0) / std::log(2.0),
        std::log(3.0) / std::log(2.0),
        std::log(3.0) / std::log(5.0 / 3.0),
    };
    return c;
}

/// Renormalization factor of the graph energies.
inline constexpr double kEnergyRenormalization = 5.0 / 3.0;

}  // namespace gasket
