#include "codefi/error.hpp"
#include "codefi/payoff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace codefi {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double width(double strike, double smoothing) { return smoothing * std::max(std::abs(strike), 1e-12); }

std::size_t argmax_abs(std::span<const double> x) {
  std::size_t best = 0;
  for (std::size_t d = 1; d < x.size(); ++d) {
    if (std::abs(x[d]) > std::abs(x[best])) best = d;
  }
  return best;
}

double table_value(const payoffs::Table& t, double x, double* slope) {
  const auto& k = t.knots;
  const auto& v = t.values;
  if (x <= k.front()) {
    if (slope) *slope = 0.0;
    return v.front();
  }
  if (x >= k.back()) {
    if (slope) *slope = 0.0;
    return v.back();
  }
  const auto it = std::upper_bound(k.begin(), k.end(), x);
  const auto i = static_cast<std::size_t>(it - k.begin());
  const double s = (v[i] - v[i - 1]) / (k[i] - k[i - 1]);
  if (slope) *slope = s;
  return v[i - 1] + s * (x - k[i - 1]);
}

}  // namespace

Payoff::Payoff(Variant impl) : impl_(std::move(impl)) {
  if (const auto* t = std::get_if<payoffs::Table>(&impl_)) {
    if (t->knots.size() < 2 || t->knots.size() != t->values.size()) {
      throw SpecificationError("table payoff needs >= 2 knots and matching values");
    }
    if (!std::is_sorted(t->knots.begin(), t->knots.end()) ||
        std::adjacent_find(t->knots.begin(), t->knots.end()) != t->knots.end()) {
      throw SpecificationError("table payoff knots must be strictly increasing");
    }
  }
  if (const auto* c = std::get_if<payoffs::Correlation>(&impl_)) {
    if (!(c->scale > 0.0)) throw SpecificationError("correlation payoff scale must be positive");
  }
}

double Payoff::operator()(std::span<const double> x) const {
  return std::visit(
      overloaded{
          [&](const payoffs::Call& p) { return std::max(x[p.coord] - p.strike, 0.0); },
          [&](const payoffs::Put& p) { return std::max(p.strike - x[p.coord], 0.0); },
          [&](const payoffs::Linear& p) {
            double acc = p.offset;
            for (std::size_t d = 0; d < p.weights.size(); ++d) acc += p.weights[d] * x[d];
            return acc;
          },
          [&](const payoffs::BestOf& p) { return std::max(std::abs(x[argmax_abs(x)]) - p.strike, 0.0); },
          [&](const payoffs::Variance& p) {
            const double dx = x[p.coord] - p.mean;
            return dx * dx;
          },
          [&](const payoffs::Correlation& p) {
            return (x[p.first] - p.mean_first) * (x[p.second] - p.mean_second) / p.scale;
          },
          [&](const payoffs::Table& p) { return table_value(p, x[p.coord], nullptr); },
          [&](const payoffs::Constant& p) { return p.value; },
      },
      impl_);
}

double Payoff::smoothed(std::span<const double> x, double smoothing) const {
  if (smoothing <= 0.0) return (*this)(x);
  return std::visit(
      overloaded{
          [&](const payoffs::Call& p) {
            const double e = width(p.strike, smoothing);
            return e * softplus((x[p.coord] - p.strike) / e);
          },
          [&](const payoffs::Put& p) {
            const double e = width(p.strike, smoothing);
            return e * softplus((p.strike - x[p.coord]) / e);
          },
          [&](const payoffs::BestOf& p) {
            const double e = width(p.strike, smoothing);
            return e * softplus((std::abs(x[argmax_abs(x)]) - p.strike) / e);
          },
          [&](const auto&) { return (*this)(x); },
      },
      impl_);
}

void Payoff::gradient(std::span<const double> x, double smoothing, std::vector<GradientEntry>& out) const {
  std::visit(
      overloaded{
          [&](const payoffs::Call& p) {
            const double z = x[p.coord] - p.strike;
            const double g = smoothing > 0.0 ? sigmoid(z / width(p.strike, smoothing)) : (z > 0.0 ? 1.0 : 0.0);
            if (g != 0.0) out.push_back({p.coord, g});
          },
          [&](const payoffs::Put& p) {
            const double z = p.strike - x[p.coord];
            const double g = smoothing > 0.0 ? sigmoid(z / width(p.strike, smoothing)) : (z > 0.0 ? 1.0 : 0.0);
            if (g != 0.0) out.push_back({p.coord, -g});
          },
          [&](const payoffs::Linear& p) {
            for (std::size_t d = 0; d < p.weights.size(); ++d) {
              if (p.weights[d] != 0.0) out.push_back({d, p.weights[d]});
            }
          },
          [&](const payoffs::BestOf& p) {
            const std::size_t d = argmax_abs(x);
            const double z = std::abs(x[d]) - p.strike;
            const double g = smoothing > 0.0 ? sigmoid(z / width(p.strike, smoothing)) : (z > 0.0 ? 1.0 : 0.0);
            if (g != 0.0) out.push_back({d, x[d] < 0.0 ? -g : g});
          },
          [&](const payoffs::Variance& p) { out.push_back({p.coord, 2.0 * (x[p.coord] - p.mean)}); },
          [&](const payoffs::Correlation& p) {
            out.push_back({p.first, (x[p.second] - p.mean_second) / p.scale});
            out.push_back({p.second, (x[p.first] - p.mean_first) / p.scale});
          },
          [&](const payoffs::Table& p) {
            double slope = 0.0;
            table_value(p, x[p.coord], &slope);
            if (slope != 0.0) out.push_back({p.coord, slope});
          },
          [&](const payoffs::Constant&) {},
      },
      impl_);
}

void Payoff::kink_curvature(std::span<const double> x, double smoothing, std::vector<GradientEntry>& out) const {
  if (smoothing <= 0.0) return;
  auto bump = [&](std::size_t coord, double z, double strike) {
    const double e = width(strike, smoothing);
    const double s = sigmoid(z / e);
    const double h = s * (1.0 - s) / e;
    if (h > 0.0) out.push_back({coord, h});
  };
  std::visit(overloaded{
                 [&](const payoffs::Call& p) { bump(p.coord, x[p.coord] - p.strike, p.strike); },
                 [&](const payoffs::Put& p) { bump(p.coord, p.strike - x[p.coord], p.strike); },
                 [&](const payoffs::BestOf& p) {
                   const std::size_t d = argmax_abs(x);
                   bump(d, std::abs(x[d]) - p.strike, p.strike);
                 },
                 [&](const auto&) {},
             },
             impl_);
}

bool Payoff::is_affine() const {
  return std::holds_alternative<payoffs::Linear>(impl_) || std::holds_alternative<payoffs::Constant>(impl_);
}

bool Payoff::has_kink() const {
  return std::holds_alternative<payoffs::Call>(impl_) || std::holds_alternative<payoffs::Put>(impl_) ||
         std::holds_alternative<payoffs::BestOf>(impl_);
}

long Payoff::max_coord() const {
  return std::visit(overloaded{
                        [](const payoffs::Call& p) { return static_cast<long>(p.coord); },
                        [](const payoffs::Put& p) { return static_cast<long>(p.coord); },
                        [](const payoffs::Linear& p) { return static_cast<long>(p.weights.size()) - 1; },
                        [](const payoffs::BestOf&) { return -1L; },
                        [](const payoffs::Variance& p) { return static_cast<long>(p.coord); },
                        [](const payoffs::Correlation& p) { return static_cast<long>(std::max(p.first, p.second)); },
                        [](const payoffs::Table& p) { return static_cast<long>(p.coord); },
                        [](const payoffs::Constant&) { return -1L; },
                    },
                    impl_);
}

std::string Payoff::describe() const {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const payoffs::Call& p) { os << "call(x" << p.coord << ", K=" << p.strike << ")"; },
                 [&](const payoffs::Put& p) { os << "put(x" << p.coord << ", K=" << p.strike << ")"; },
                 [&](const payoffs::Linear& p) { os << "linear(" << p.weights.size() << " weights, c=" << p.offset << ")"; },
                 [&](const payoffs::BestOf& p) { os << "best_of(K=" << p.strike << ")"; },
                 [&](const payoffs::Variance& p) { os << "variance(x" << p.coord << ", F=" << p.mean << ")"; },
                 [&](const payoffs::Correlation& p) { os << "correlation(x" << p.first << ", x" << p.second << ")"; },
                 [&](const payoffs::Table& p) { os << "table(x" << p.coord << ", " << p.knots.size() << " knots)"; },
                 [&](const payoffs::Constant& p) { os << "constant(" << p.value << ")"; },
             },
             impl_);
  return os.str();
}

}  // namespace codefi
