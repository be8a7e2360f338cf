#ifndef HARDBALL_PARAMS_HPP
#define HARDBALL_PARAMS_HPP

#include <string>
#include <vector>

#include "hardball/errors.hpp"

namespace hardball {

/// Outer geometric parameters of an N-ball system on the flat torus of size
/// L, plus the numerical tolerances every rank/tangency/simultaneity decision
/// uses. All downstream operations take these by const reference.
struct SystemParams {
    int n_balls = 2;                ///< N >= 2
    int dim = 3;                    ///< nu >= 2
    double radius = 0.1;            ///< common ball radius r > 0
    double box = 1.0;               ///< torus size L, strictly > 4r
    std::vector<double> masses;     ///< N positive masses

    double rank_tol = 1e-8;         ///< relative singular-value threshold
    double tangency_tol = 1e-9;     ///< speed threshold for grazing detection
    double simultaneity_tol = 1e-10; ///< time window for double collisions

    /// Dimension d = nu*(N-1) of the translation-reduced configuration space.
    int reduced_dim() const { return dim * (n_balls - 1); }

    double total_mass() const {
        double s = 0.0;
        for (double m : masses) s += m;
        return s;
    }

    /// Absolute tolerance for contact residuals, tied to the box scale.
    double contact_tol() const { return 1e-9 * box; }

    void validate() const {
        if (n_balls < 2) throw DomainError("n_balls must be >= 2");
        if (dim < 2) throw DomainError("dim must be >= 2");
        if (!(radius > 0.0)) throw DomainError("radius must be > 0");
        if (!(box > 4.0 * radius))
            throw DomainError("box must exceed 4*radius (room guard): box=" +
                              std::to_string(box) + ", radius=" +
                              std::to_string(radius));
        if (static_cast<int>(masses.size()) != n_balls)
            throw DomainError("masses list must have n_balls entries");
        for (double m : masses)
            if (!(m > 0.0)) throw DomainError("all masses must be positive");
        if (!(rank_tol > 0.0) || !(tangency_tol > 0.0) || !(simultaneity_tol > 0.0))
            throw DomainError("tolerances must be positive");
        if (reduced_dim() < 2) throw DomainError("reduced dimension must be >= 2");
    }
};

inline SystemParams make_params(int n_balls, int dim, double radius, double box,
                                std::vector<double> masses) {
    SystemParams p;
    p.n_balls = n_balls;
    p.dim = dim;
    p.radius = radius;
    p.box = box;
    p.masses = std::move(masses);
    p.validate();
    return p;
}

} // namespace hardball

#endif
