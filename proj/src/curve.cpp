#include "affreal/curve.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "affreal/error.hpp"

namespace affreal {

Grid Grid::uniform(double x_max, double dx) {
    if (!(dx > 0.0) || !(x_max > 0.0)) throw Error(ErrorKind::InvalidArgument, "grid needs x_max > 0 and dx > 0");
    const double cells = x_max / dx;
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells))
        throw Error(ErrorKind::InvalidArgument, "x_max is not a multiple of dx");
    Grid g{dx, static_cast<Index>(rounded) + 1};
    if (g.size < 6) throw Error(ErrorKind::InvalidArgument, "grid needs at least 6 points");
    return g;
}

Vec Grid::points() const {
    return tabulate([](double x) { return x; });
}

Vec Grid::sample(double (*f)(double)) const { return tabulate(f); }

bool Grid::operator==(const Grid& o) const {
    return size == o.size && std::abs(dx - o.dx) <= 1e-12 * std::max(dx, o.dx);
}

Vec d_dx(const Vec& f, double dx) {
    const Index n = f.size();
    if (n < 5) throw Error(ErrorKind::NotInDomain, "derivative stencil needs at least 5 points");
    Vec d(n);
    const double s = 1.0 / (12.0 * dx);
    d(0) = (-25 * f(0) + 48 * f(1) - 36 * f(2) + 16 * f(3) - 3 * f(4)) * s;
    d(1) = (-3 * f(0) - 10 * f(1) + 18 * f(2) - 6 * f(3) + f(4)) * s;
    for (Index i = 2; i < n - 2; ++i) d(i) = (f(i - 2) - 8 * f(i - 1) + 8 * f(i + 1) - f(i + 2)) * s;
    d(n - 2) = (3 * f(n - 1) + 10 * f(n - 2) - 18 * f(n - 3) + 6 * f(n - 4) - f(n - 5)) * s;
    d(n - 1) = (25 * f(n - 1) - 48 * f(n - 2) + 36 * f(n - 3) - 16 * f(n - 4) + 3 * f(n - 5)) * s;
    return d;
}

Vec d2_dx2(const Vec& f, double dx) {
    const Index n = f.size();
    if (n < 6) throw Error(ErrorKind::NotInDomain, "second derivative stencil needs at least 6 points");
    Vec d(n);
    const double s = 1.0 / (12.0 * dx * dx);
    d(0) = (45 * f(0) - 154 * f(1) + 214 * f(2) - 156 * f(3) + 61 * f(4) - 10 * f(5)) * s;
    d(1) = (10 * f(0) - 15 * f(1) - 4 * f(2) + 14 * f(3) - 6 * f(4) + f(5)) * s;
    for (Index i = 2; i < n - 2; ++i)
        d(i) = (-f(i - 2) + 16 * f(i - 1) - 30 * f(i) + 16 * f(i + 1) - f(i + 2)) * s;
    d(n - 2) = (10 * f(n - 1) - 15 * f(n - 2) - 4 * f(n - 3) + 14 * f(n - 4) - 6 * f(n - 5) + f(n - 6)) * s;
    d(n - 1) = (45 * f(n - 1) - 154 * f(n - 2) + 214 * f(n - 3) - 156 * f(n - 4) + 61 * f(n - 5) - 10 * f(n - 6)) * s;
    return d;
}

Vec cumulative_integral(const Vec& f, double dx) {
    const Index n = f.size();
    Vec out(n);
    if (n == 0) return out;
    out(0) = 0.0;
    for (Index i = 1; i < n; ++i) out(i) = out(i - 1) + 0.5 * dx * (f(i - 1) + f(i));
    if (n >= 5) {
        const Vec fp = d_dx(f, dx);
        const double c = dx * dx / 12.0;
        for (Index i = 1; i < n; ++i) out(i) -= c * (fp(i) - fp(0));
    }
    return out;
}

double trapezoid(const Vec& f, double dx) {
    const Index n = f.size();
    if (n < 2) return 0.0;
    return dx * (f.sum() - 0.5 * (f(0) + f(n - 1)));
}

std::vector<std::pair<Index, double>> interpolation_weights(const Grid& grid, double x) {
    const double tol = 1e-12 * std::max(1.0, grid.x_max());
    if (!(x >= -tol) || !(x <= grid.x_max() + tol))
        throw Error(ErrorKind::NotInDomain, "point " + std::to_string(x) + " lies outside the grid");
    const double pos = x / grid.dx;
    const Index nearest = static_cast<Index>(std::llround(pos));
    if (std::abs(pos - static_cast<double>(nearest)) <= 1e-10) return {{std::clamp<Index>(nearest, 0, grid.size - 1), 1.0}};

    const Index i0 = std::clamp<Index>(static_cast<Index>(std::floor(pos)) - 1, 0, grid.size - 4);
    std::vector<std::pair<Index, double>> w;
    for (Index j = 0; j < 4; ++j) {
        double l = 1.0;
        for (Index k = 0; k < 4; ++k)
            if (k != j) l *= (pos - static_cast<double>(i0 + k)) / static_cast<double>(j - k);
        w.emplace_back(i0 + j, l);
    }
    return w;
}

double interpolate(const Grid& grid, const Vec& f, double x) {
    double s = 0.0;
    for (auto [i, w] : interpolation_weights(grid, x)) s += w * f(i);
    return s;
}

Functional Functional::short_end() { return point(0.0); }

Functional Functional::point(double x) { return point_combo({{x, 1.0}}); }

Functional Functional::point_combo(std::vector<std::pair<double, double>> weight_at) {
    if (weight_at.empty()) throw Error(ErrorKind::InvalidArgument, "functional needs at least one point");
    Functional f;
    f.terms_ = std::move(weight_at);
    return f;
}

std::vector<std::pair<Index, double>> Functional::weights(const Grid& grid) const {
    std::vector<std::pair<Index, double>> out;
    for (auto [x, c] : terms_)
        for (auto [i, w] : interpolation_weights(grid, x)) {
            auto it = std::find_if(out.begin(), out.end(), [i = i](auto& p) { return p.first == i; });
            if (it == out.end())
                out.emplace_back(i, c * w);
            else
                it->second += c * w;
        }
    return out;
}

RowVec Functional::row(const Grid& grid) const {
    RowVec r = RowVec::Zero(grid.size);
    for (auto [i, w] : weights(grid)) r(i) += w;
    return r;
}

double Functional::apply(const Grid& grid, const Vec& h) const {
    if (h.size() != grid.size) throw Error(ErrorKind::GridMismatch, "curve does not match the functional's grid");
    double s = 0.0;
    for (auto [i, w] : weights(grid)) s += w * h(i);
    return s;
}

Weight::Weight(double a) : exponent(a) {
    if (!(a > 3.0)) throw Error(ErrorKind::InvalidArgument, "weight exponent must exceed 3");
}

double Weight::operator()(double x) const { return std::pow(1.0 + x, exponent); }

ForwardCurve::ForwardCurve(Grid grid, Vec values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size) throw Error(ErrorKind::GridMismatch, "curve values do not match the grid");
}

double hw_norm(const Grid& grid, const Vec& h, const Weight& w) {
    if (h.size() != grid.size) throw Error(ErrorKind::GridMismatch, "curve does not match the grid");
    const Vec dh = d_dx(h, grid.dx);
    Vec integrand(grid.size);
    for (Index i = 0; i < grid.size; ++i) integrand(i) = dh(i) * dh(i) * w(grid.x(i));
    return std::sqrt(h(0) * h(0) + trapezoid(integrand, grid.dx));
}

double hw_norm(const ForwardCurve& h, const Weight& w) { return hw_norm(h.grid(), h.values(), w); }

}  // namespace affreal
