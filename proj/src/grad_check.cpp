#include "gaid/train.hpp"

namespace gaid {

GradCheckReport grad_check(const Batch<double>& batch, const ModelParams<double>& params,
                           const NoiseRecord<double>& noise, const GraphConfig& cfg,
                           double tolerance, double fd_step, std::int64_t subset_threshold,
                           std::uint64_t seed) {
  const auto analytic = forward_backward(batch, params, noise, cfg);
  const std::vector<double> grad_flat = flatten_params(analytic.grads);
  std::vector<double> theta = flatten_params(params);
  const std::int64_t total = static_cast<std::int64_t>(theta.size());

  std::vector<std::int64_t> coords(theta.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<std::int64_t>(i);
  if (total > subset_threshold) {
    Rng rng = Rng::substream(seed, 0xfd);
    shuffle_indices(coords, rng);
    coords.resize(static_cast<std::size_t>(std::max<std::int64_t>(500, subset_threshold)));
  }

  // Map flat offsets to named parameter groups.
  struct Span {
    std::string name;
    std::int64_t begin, end;
  };
  std::vector<Span> spans;
  {
    auto refs = param_refs(const_cast<ModelParams<double>&>(params));
    std::int64_t off = 0;
    for (const auto& r : refs) {
      spans.push_back({r.name, off, off + r.tensor->numel()});
      off += r.tensor->numel();
    }
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (const auto& s : spans) report.groups.push_back({s.name, 0.0, 0});

  ModelParams<double> probe = params;
  auto loss_at = [&](const std::vector<double>& flat) {
    unflatten_params(probe, flat);
    return static_cast<double>(forward_backward(batch, probe, noise, cfg).loss.total);
  };

  for (const std::int64_t c : coords) {
    const double saved = theta[static_cast<std::size_t>(c)];
    theta[static_cast<std::size_t>(c)] = saved + fd_step;
    const double plus = loss_at(theta);
    theta[static_cast<std::size_t>(c)] = saved - fd_step;
    const double minus = loss_at(theta);
    theta[static_cast<std::size_t>(c)] = saved;
    const double numeric = (plus - minus) / (2.0 * fd_step);
    const double err = grad_check_rel_err(grad_flat[static_cast<std::size_t>(c)], numeric);
    for (std::size_t gi = 0; gi < spans.size(); ++gi) {
      if (c >= spans[gi].begin && c < spans[gi].end) {
        report.groups[gi].max_rel_err = std::max(report.groups[gi].max_rel_err, err);
        report.groups[gi].coords_checked += 1;
        break;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, err);
  }
  report.passed = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace gaid
