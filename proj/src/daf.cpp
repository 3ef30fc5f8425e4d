#include "ostf/daf.hpp"

#include <cmath>
#include <string>

#include "ostf/errors.hpp"
#include "ostf/log.hpp"

namespace ostf::daf {

namespace {

constexpr double kProbClamp = 1e-7;

double clamp_prob(double p) {
  if (p < kProbClamp) return kProbClamp;
  if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
  return p;
}

}  // namespace

void FeatureBatch::validate() const {
  if (roi.rows() < 1 || roi.cols() < 1) throw ParamError("feature batch: empty roi matrix");
  if (global.size() != roi.cols())
    throw ParamError("feature batch: global vector length does not match feature dim");
  if (labels.size() != roi.rows())
    throw ParamError("feature batch: label count does not match row count");
  if (!roi.allFinite() || !global.allFinite())
    throw ParamError("feature batch: non-finite entries");
}

namespace {

// Explicit fill order; Eigen nullary expressions do not promise one.
Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng, double scale) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal(rng);
  return v;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * normal(rng);
  return m;
}

}  // namespace

DafParams DafParams::random(Eigen::Index dim, Rng& rng, double scale) {
  DafParams p;
  p.kernel = random_vector(dim, rng, 1.0);
  p.mod_w = random_matrix(dim, 2 * dim, rng, scale);
  p.mod_b = random_vector(dim, rng, scale);
  p.cls_w = random_vector(dim, rng, scale);
  p.cls_b = scale * normal(rng);
  return p;
}

void DafParams::validate(Eigen::Index dim) const {
  if (kernel.size() != dim) throw ParamError("daf params: kernel length != feature dim");
  if (mod_w.rows() != dim || mod_w.cols() != 2 * dim)
    throw ParamError("daf params: modulation weights are not dim x 2*dim");
  if (mod_b.size() != dim) throw ParamError("daf params: modulation bias length != dim");
  if (cls_w.size() != dim) throw ParamError("daf params: classifier weights length != dim");
  if (!kernel.allFinite() || !mod_w.allFinite() || !mod_b.allFinite() || !cls_w.allFinite() ||
      !std::isfinite(cls_b))
    throw ParamError("daf params: non-finite entries");
  if (!(margin > 0.0)) throw ParamError("daf params: margin must be positive");
}

Forward forward(const FeatureBatch& batch, const DafParams& params) {
  batch.validate();
  const Eigen::Index d = batch.dim();
  params.validate(d);

  // mod_w acts on concat(global, roi); split it into the two D x D halves so
  // the batch stays one matrix product.
  const auto w_glob = params.mod_w.leftCols(d);
  const auto w_roi = params.mod_w.rightCols(d);
  const Eigen::VectorXd base = w_glob * batch.global + params.mod_b;

  Forward fw;
  fw.vm = batch.roi * w_roi.transpose();
  fw.vm.rowwise() += base.transpose();
  fw.resid = batch.roi - fw.vm;
  fw.logits = fw.resid * params.cls_w;
  fw.logits.array() += params.cls_b;
  fw.probs = fw.logits.unaryExpr([](double z) { return clamp_prob(1.0 / (1.0 + std::exp(-z))); });
  return fw;
}

double loss_cls(const Eigen::VectorXd& probs,
                const Eigen::Array<bool, Eigen::Dynamic, 1>& labels) {
  if (probs.size() != labels.size()) throw ParamError("loss_cls: size mismatch");
  if (probs.size() == 0) throw ParamError("loss_cls: empty batch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    sum += labels[i] ? -std::log(p) : -std::log1p(-p);
  }
  return sum / static_cast<double>(probs.size());
}

namespace {

struct FeatDistances {
  Eigen::MatrixXd diff;  // N x D, roi - reference
  Eigen::VectorXd d;     // N
};

FeatDistances feat_distances(const FeatureBatch& batch, const DafParams& params,
                             FeatOptions opts) {
  FeatDistances out;
  if (opts.target == DistanceTarget::kernel) {
    out.diff = batch.roi.rowwise() - params.kernel.transpose();
  } else {
    out.diff = forward(batch, params).resid;
  }
  out.d = out.diff.rowwise().norm();
  if (opts.kind == DistanceKind::squared) out.d = out.d.array().square();
  return out;
}

}  // namespace

FeatLoss loss_feat(const FeatureBatch& batch, const DafParams& params, FeatOptions opts) {
  batch.validate();
  params.validate(batch.dim());
  const FeatDistances fd = feat_distances(batch, params, opts);

  double sum_auth = 0.0, sum_tamp = 0.0;
  Eigen::Index n_auth = 0, n_tamp = 0;
  for (Eigen::Index i = 0; i < batch.n(); ++i) {
    if (batch.labels[i]) {
      sum_tamp += fd.d[i];
      ++n_tamp;
    } else {
      sum_auth += fd.d[i];
      ++n_auth;
    }
  }

  FeatLoss out;
  out.dist_auth = n_auth > 0 ? sum_auth / static_cast<double>(n_auth) : 0.0;
  out.dist_tamp = n_tamp > 0 ? sum_tamp / static_cast<double>(n_tamp) : 0.0;
  out.missing_group = n_auth == 0 || n_tamp == 0;
  if (out.missing_group)
    log::warn("daf: ", "loss_feat: batch has no ", n_auth == 0 ? "authentic" : "tampered",
              " instances; that mean distance counts as 0");
  out.l_feat = out.dist_auth + std::max(out.dist_auth - out.dist_tamp + params.margin, 0.0);
  return out;
}

double loss_bbox(const Eigen::MatrixXd& pred_boxes, const Eigen::MatrixXd& target_boxes) {
  if (pred_boxes.rows() != target_boxes.rows() || pred_boxes.cols() != target_boxes.cols())
    throw ParamError("loss_bbox: shape mismatch");
  if (pred_boxes.size() == 0) return 0.0;
  return (pred_boxes - target_boxes).cwiseAbs().mean();
}

LossBreakdown total_loss(const FeatureBatch& batch, const DafParams& params,
                         const Eigen::MatrixXd& pred_boxes, const Eigen::MatrixXd& target_boxes,
                         FeatOptions opts) {
  LossBreakdown out;
  out.l_cls = loss_cls(forward(batch, params).probs, batch.labels);
  const FeatLoss f = loss_feat(batch, params, opts);
  out.l_feat = f.l_feat;
  out.dist_auth = f.dist_auth;
  out.dist_tamp = f.dist_tamp;
  out.l_bbox = loss_bbox(pred_boxes, target_boxes);
  out.l_all = out.l_cls + out.l_bbox + out.l_feat;
  return out;
}

Gradients analytic_grad(const FeatureBatch& batch, const DafParams& params, FeatOptions opts) {
  const Eigen::Index n = batch.n();
  const Eigen::Index d = batch.dim();
  const Forward fw = forward(batch, params);

  // Classification term. Where the probability clamp is active the computed
  // loss is flat, so those samples carry zero gradient.
  Eigen::VectorXd co_z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = fw.probs[i];
    const bool clamped = p <= kProbClamp || p >= 1.0 - kProbClamp;
    co_z[i] = clamped ? 0.0 : (p - (batch.labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
  }

  Gradients g;
  g.kernel = Eigen::VectorXd::Zero(d);
  g.cls_w = fw.resid.transpose() * co_z;
  g.cls_b = co_z.sum();
  // d logit / d vm = -cls_w for each instance.
  Eigen::MatrixXd gvm = -co_z * params.cls_w.transpose();  // N x D

  // Feature term.
  const FeatDistances fd = feat_distances(batch, params, opts);
  double sum_auth = 0.0, sum_tamp = 0.0;
  Eigen::Index n_auth = 0, n_tamp = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (batch.labels[i]) {
      sum_tamp += fd.d[i];
      ++n_tamp;
    } else {
      sum_auth += fd.d[i];
      ++n_auth;
    }
  }
  const double dist_auth = n_auth > 0 ? sum_auth / static_cast<double>(n_auth) : 0.0;
  const double dist_tamp = n_tamp > 0 ? sum_tamp / static_cast<double>(n_tamp) : 0.0;
  const bool hinge_active = dist_auth - dist_tamp + params.margin > 0.0;

  Eigen::MatrixXd pull(n, d);  // d l_feat / d diff_i, one row per instance
  for (Eigen::Index i = 0; i < n; ++i) {
    double coeff;
    if (batch.labels[i])
      coeff = hinge_active ? -1.0 / static_cast<double>(n_tamp) : 0.0;
    else
      coeff = (1.0 + (hinge_active ? 1.0 : 0.0)) / static_cast<double>(n_auth);
    double scale;
    if (opts.kind == DistanceKind::euclidean) {
      if (fd.d[i] < 1e-12) throw KinkError("loss_feat gradient undefined at zero distance");
      scale = 1.0 / fd.d[i];
    } else {
      scale = 2.0;
    }
    pull.row(i) = coeff * scale * fd.diff.row(i);
  }

  if (opts.target == DistanceTarget::kernel) {
    g.kernel = -pull.colwise().sum().transpose();
  } else {
    gvm -= pull;  // diff = roi - vm
  }

  // Back through vm = mod_w * concat(global, roi) + mod_b.
  const Eigen::VectorXd gvm_sum = gvm.colwise().sum().transpose();
  g.mod_w.resize(d, 2 * d);
  g.mod_w.leftCols(d) = gvm_sum * batch.global.transpose();
  g.mod_w.rightCols(d) = gvm.transpose() * batch.roi;
  g.mod_b = gvm_sum;
  return g;
}

namespace {

double loss_for_check(const FeatureBatch& batch, const DafParams& params, FeatOptions opts) {
  return loss_cls(forward(batch, params).probs, batch.labels) +
         loss_feat(batch, params, opts).l_feat;
}

void guard_kinks(const FeatureBatch& batch, const DafParams& params, FeatOptions opts) {
  const Forward fw = forward(batch, params);
  for (Eigen::Index i = 0; i < fw.probs.size(); ++i) {
    const double p = fw.probs[i];
    const bool near_low = p > kProbClamp && p < 10.0 * kProbClamp;
    const bool near_high = p < 1.0 - kProbClamp && p > 1.0 - 10.0 * kProbClamp;
    if (near_low || near_high)
      throw KinkError("probability sits at the clamp boundary; re-sample");
  }
  const FeatLoss f = loss_feat(batch, params, opts);
  if (std::abs(f.dist_auth - f.dist_tamp + params.margin) < 1e-4)
    throw KinkError("hinge argument near zero; re-sample");
  if (opts.kind == DistanceKind::euclidean) {
    const FeatDistances fd = feat_distances(batch, params, opts);
    if ((fd.d.array() < 1e-4).any())
      throw KinkError("a feature sits on the distance target; re-sample");
  }
}

}  // namespace

double grad_check(const DafParams& params, const FeatureBatch& batch, double epsilon,
                  FeatOptions opts) {
  batch.validate();
  params.validate(batch.dim());
  if (!(epsilon > 0.0)) throw ParamError("grad_check: epsilon must be positive");
  guard_kinks(batch, params, opts);

  const Gradients g = analytic_grad(batch, params, opts);
  DafParams p = params;  // probed in place
  double max_rel = 0.0;
  auto probe = [&](double* slot, double analytic) {
    const double saved = *slot;
    *slot = saved + epsilon;
    const double hi = loss_for_check(batch, p, opts);
    *slot = saved - epsilon;
    const double lo = loss_for_check(batch, p, opts);
    *slot = saved;
    const double numeric = (hi - lo) / (2.0 * epsilon);
    const double rel = std::abs(analytic - numeric) /
                       std::max(1.0, std::abs(analytic) + std::abs(numeric));
    max_rel = std::max(max_rel, rel);
  };
  for (Eigen::Index i = 0; i < p.kernel.size(); ++i) probe(&p.kernel[i], g.kernel[i]);
  for (Eigen::Index c = 0; c < p.mod_w.cols(); ++c)
    for (Eigen::Index r = 0; r < p.mod_w.rows(); ++r) probe(&p.mod_w(r, c), g.mod_w(r, c));
  for (Eigen::Index i = 0; i < p.mod_b.size(); ++i) probe(&p.mod_b[i], g.mod_b[i]);
  for (Eigen::Index i = 0; i < p.cls_w.size(); ++i) probe(&p.cls_w[i], g.cls_w[i]);
  probe(&p.cls_b, g.cls_b);
  return max_rel;
}

std::pair<DafParams, ToyReport> train_toy(const ToyConfig& cfg) {
  if (cfg.dim < 1 || cfg.n_per_class < 1 || cfg.held_out_per_class < 1 || cfg.steps < 1)
    throw ParamError("train_toy: sizes and steps must be positive");
  Rng rng(cfg.seed);

  Eigen::VectorXd center = random_vector(cfg.dim, rng, 1.0);
  center *= cfg.separation / center.norm();

  auto draw_cluster = [&](Eigen::Index rows, const Eigen::VectorXd* offset) {
    Eigen::MatrixXd m(rows, cfg.dim);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cfg.dim; ++j)
        m(i, j) = normal(rng) + (offset ? (*offset)[j] : 0.0);
    return m;
  };

  auto make_batch = [&](int per_class) {
    FeatureBatch b;
    b.roi.resize(2 * per_class, cfg.dim);
    b.roi.topRows(per_class) = draw_cluster(per_class, nullptr);
    b.roi.bottomRows(per_class) = draw_cluster(per_class, &center);
    b.labels.resize(2 * per_class);
    b.labels.topRows(per_class).setConstant(false);
    b.labels.bottomRows(per_class).setConstant(true);
    b.global = b.roi.colwise().mean();
    return b;
  };

  const FeatureBatch train = make_batch(cfg.n_per_class);
  const FeatureBatch held = make_batch(cfg.held_out_per_class);

  DafParams params = DafParams::random(cfg.dim, rng, 0.01);
  params.margin = cfg.margin;

  ToyReport report;
  report.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    const double l_cls = loss_cls(forward(train, params).probs, train.labels);
    const FeatLoss f = loss_feat(train, params, cfg.feat);
    const double l_all = l_cls + f.l_feat;
    if (!std::isfinite(l_all))
      throw TrainError("toy training diverged at step " + std::to_string(step));
    report.loss_curve.push_back(l_all);

    const Gradients g = analytic_grad(train, params, cfg.feat);
    params.kernel -= cfg.lr * g.kernel;
    params.mod_w -= cfg.lr * g.mod_w;
    params.mod_b -= cfg.lr * g.mod_b;
    params.cls_w -= cfg.lr * g.cls_w;
    params.cls_b -= cfg.lr * g.cls_b;
  }

  const Eigen::VectorXd auth_mean = train.roi.topRows(cfg.n_per_class).colwise().mean();
  report.kernel_gap = (params.kernel - auth_mean).norm();

  const Forward fw = forward(held, params);
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < held.n(); ++i)
    if ((fw.probs[i] > 0.5) == held.labels[i]) ++correct;
  report.accuracy = static_cast<double>(correct) / static_cast<double>(held.n());

  const FeatLoss final_feat = loss_feat(train, params, cfg.feat);
  report.dist_auth = final_feat.dist_auth;
  report.dist_tamp = final_feat.dist_tamp;
  return {std::move(params), std::move(report)};
}

}  // namespace ostf::daf
