#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "ostf/rng.hpp"

namespace ostf::daf {

// One batch of per-text features plus the pooled image feature.
struct FeatureBatch {
  Eigen::MatrixXd roi;                        // N x D
  Eigen::VectorXd global;                     // D
  Eigen::Array<bool, Eigen::Dynamic, 1> labels;  // true = tampered

  Eigen::Index n() const { return roi.rows(); }
  Eigen::Index dim() const { return roi.cols(); }
  void validate() const;
};

struct DafParams {
  Eigen::VectorXd kernel;  // D
  Eigen::MatrixXd mod_w;   // D x 2D, acts on concat(global, roi)
  Eigen::VectorXd mod_b;   // D
  Eigen::VectorXd cls_w;   // D
  double cls_b = 0.0;
  double margin = 32.0;

  static DafParams random(Eigen::Index dim, Rng& rng, double scale = 0.1);
  void validate(Eigen::Index dim) const;
};

// Which vector the feature distances are measured against: the learned
// kernel, or each instance's own modulated vector.
enum class DistanceTarget { kernel, modulated };
enum class DistanceKind { euclidean, squared };

struct FeatOptions {
  DistanceTarget target = DistanceTarget::kernel;
  DistanceKind kind = DistanceKind::euclidean;
};

struct Forward {
  Eigen::MatrixXd vm;      // N x D modulated vectors
  Eigen::MatrixXd resid;   // N x D, roi - vm
  Eigen::VectorXd logits;  // N
  Eigen::VectorXd probs;   // N, clamped to [1e-7, 1 - 1e-7]
};

Forward forward(const FeatureBatch& batch, const DafParams& params);

double loss_cls(const Eigen::VectorXd& probs, const Eigen::Array<bool, Eigen::Dynamic, 1>& labels);

struct FeatLoss {
  double l_feat = 0.0;
  double dist_auth = 0.0;
  double dist_tamp = 0.0;
  bool missing_group = false;  // a label group was empty; its mean distance is 0
};

FeatLoss loss_feat(const FeatureBatch& batch, const DafParams& params, FeatOptions opts = {});

double loss_bbox(const Eigen::MatrixXd& pred_boxes, const Eigen::MatrixXd& target_boxes);

struct LossBreakdown {
  double l_cls = 0.0;
  double l_bbox = 0.0;
  double l_feat = 0.0;
  double l_all = 0.0;
  double dist_auth = 0.0;
  double dist_tamp = 0.0;
};

LossBreakdown total_loss(const FeatureBatch& batch, const DafParams& params,
                         const Eigen::MatrixXd& pred_boxes, const Eigen::MatrixXd& target_boxes,
                         FeatOptions opts = {});

struct Gradients {
  Eigen::VectorXd kernel;
  Eigen::MatrixXd mod_w;
  Eigen::VectorXd mod_b;
  Eigen::VectorXd cls_w;
  double cls_b = 0.0;
};

// Gradient of l_cls + l_feat with respect to every parameter (boxes are
// inputs, not parameters, so l_bbox contributes nothing). Throws KinkError
// when the batch sits on a nondifferentiable point.
Gradients analytic_grad(const FeatureBatch& batch, const DafParams& params, FeatOptions opts = {});

// Max relative error between analytic_grad and central finite differences
// over every parameter entry. Throws KinkError near hinge/norm/clamp kinks.
double grad_check(const DafParams& params, const FeatureBatch& batch, double epsilon = 1e-6,
                  FeatOptions opts = {});

struct ToyConfig {
  Eigen::Index dim = 32;
  double margin = 32.0;
  int steps = 400;
  double lr = 0.05;
  std::uint64_t seed = 1;
  int n_per_class = 1000;        // training points per class
  int held_out_per_class = 1000;
  double separation = 10.0;      // distance between cluster centers
  // Squared distances keep the kernel pull linear; the hinge then goes
  // inactive once the clusters are told apart and the kernel settles on the
  // authentic mean. See loss_feat for the plain-euclidean alternative.
  FeatOptions feat{DistanceTarget::kernel, DistanceKind::squared};
};

struct ToyReport {
  double kernel_gap = 0.0;  // final |kernel - authentic sample mean|
  double accuracy = 0.0;    // held-out fraction correct at p > 0.5
  double dist_auth = 0.0;
  double dist_tamp = 0.0;
  std::vector<double> loss_curve;
};

// Full-batch gradient descent on l_cls + l_feat over two synthetic unit
// Gaussian clusters. Deterministic given the seed.
std::pair<DafParams, ToyReport> train_toy(const ToyConfig& cfg);

}  // namespace ostf::daf
