#pragma once

#include <utility>
#include <vector>

#include "affreal/types.hpp"

namespace affreal {

/// Uniform grid 0 = x_0 < ... < x_{n-1} = x_max.
struct Grid {
    double dx = 0.0;
    Index size = 0;

    static Grid uniform(double x_max, double dx);

    double x(Index i) const { return static_cast<double>(i) * dx; }
    double x_max() const { return x(size - 1); }
    Vec points() const;
    Vec sample(double (*f)(double)) const;
    template <class F>
    Vec tabulate(F&& f) const {
        Vec out(size);
        for (Index i = 0; i < size; ++i) out(i) = f(x(i));
        return out;
    }
    bool operator==(const Grid& o) const;
};

/// First derivative, fourth order everywhere (one-sided five-point closures at both ends).
Vec d_dx(const Vec& f, double dx);
/// Second derivative, fourth order everywhere.
Vec d2_dx2(const Vec& f, double dx);
/// Running integral from 0, trapezoid with the endpoint derivative correction.
Vec cumulative_integral(const Vec& f, double dx);
/// Plain composite trapezoid over the whole grid.
double trapezoid(const Vec& f, double dx);

/// Grid weights reproducing cubic Lagrange interpolation at x.
std::vector<std::pair<Index, double>> interpolation_weights(const Grid& grid, double x);
double interpolate(const Grid& grid, const Vec& f, double x);

/// Continuous linear functional on curves, represented by a sparse weight row.
class Functional {
public:
    static Functional short_end();
    static Functional point(double x);
    /// sum_i w_i h(x_i)
    static Functional point_combo(std::vector<std::pair<double, double>> weight_at);

    double apply(const Grid& grid, const Vec& h) const;
    RowVec row(const Grid& grid) const;
    /// Sparse grid weights; valid only for the grid they were built for.
    std::vector<std::pair<Index, double>> weights(const Grid& grid) const;
    const std::vector<std::pair<double, double>>& terms() const { return terms_; }

private:
    std::vector<std::pair<double, double>> terms_;  // (x, weight)
};

/// Weight w(x) = (1 + x)^a of the forward-curve norm; requires a > 3.
struct Weight {
    double exponent = 4.0;

    explicit Weight(double a = 4.0);
    double operator()(double x) const;
};

/// A forward curve sampled on a grid.
class ForwardCurve {
public:
    ForwardCurve(Grid grid, Vec values);

    const Grid& grid() const { return grid_; }
    const Vec& values() const { return values_; }
    double operator()(double x) const { return interpolate(grid_, values_, x); }
    ForwardCurve derivative() const { return {grid_, d_dx(values_, grid_.dx)}; }
    ForwardCurve primitive() const { return {grid_, cumulative_integral(values_, grid_.dx)}; }

private:
    Grid grid_;
    Vec values_;
};

/// ||h||^2 = |h(0)|^2 + int |h'|^2 w on the grid.
double hw_norm(const ForwardCurve& h, const Weight& w);
double hw_norm(const Grid& grid, const Vec& h, const Weight& w);

}  // namespace affreal
