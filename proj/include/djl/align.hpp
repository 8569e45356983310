#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "djl/errors.hpp"
#include "djl/model.hpp"

namespace djl {

/// Node latent positions at one time: rows are zeta_j(t).
struct LatentPositionFrame {
  int t_idx = 0;
  Eigen::MatrixXd z;  // J x R_zeta
};

inline LatentPositionFrame frame_from_state(const LatentState& s, int t_idx) {
  if (t_idx < 0 || t_idx >= s.num_times) {
    throw IndexOutOfRange("frame time index out of range");
  }
  LatentPositionFrame f;
  f.t_idx = t_idx;
  f.z.resize(s.num_nodes, s.rank_shared);
  for (int j = 0; j < s.num_nodes; ++j) {
    for (int r = 0; r < s.rank_shared; ++r) {
      f.z(j, r) = s.zeta(s.zeta_row(j, r), t_idx);
    }
  }
  return f;
}

/// Orthogonal Procrustes: returns Z O with O = U V' from the SVD of Z' Z0,
/// the orthogonal matrix (reflections included) minimizing ||Z O - Z0||_F.
inline LatentPositionFrame procrustes_rotate(const LatentPositionFrame& z,
                                             const LatentPositionFrame& z0) {
  if (z.z.rows() != z0.z.rows() || z.z.cols() != z0.z.cols()) {
    throw ShapeMismatch("procrustes frames must share shape");
  }
  const Eigen::MatrixXd m = z.z.transpose() * z0.z;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd rot = svd.matrixU() * svd.matrixV().transpose();
  return LatentPositionFrame{z.t_idx, z.z * rot};
}

/// Rotates every draw's frame at t_idx to the first post burn-in draw and
/// returns the elementwise mean.
inline LatentPositionFrame posterior_mean_positions(
    const PosteriorArchive& archive, int t_idx) {
  if (archive.draws.empty()) throw ShapeMismatch("archive has no draws");
  const LatentPositionFrame ref = frame_from_state(archive.draws.front(), t_idx);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(ref.z.rows(), ref.z.cols());
  for (const LatentState& s : archive.draws) {
    acc += procrustes_rotate(frame_from_state(s, t_idx), ref).z;
  }
  acc /= static_cast<double>(archive.draws.size());
  return LatentPositionFrame{t_idx, std::move(acc)};
}

struct PcaProjection {
  Eigen::MatrixXd coords;  // J x 2
  Eigen::VectorXd singular_values;
  bool rank_deficient = false;  // second singular value below 1e-10
};

/// Column-centers the frame and projects onto its top-2 right singular
/// vectors; each component's loading vector is oriented so its
/// largest-magnitude entry is positive.
inline PcaProjection pca_project(const LatentPositionFrame& frame) {
  if (frame.z.cols() < 2) {
    throw ShapeMismatch("pca projection needs at least two columns");
  }
  Eigen::MatrixXd x = frame.z;
  x.rowwise() -= x.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  PcaProjection out;
  out.singular_values = svd.singularValues();
  out.rank_deficient = out.singular_values.size() < 2 ||
                       out.singular_values(1) < 1e-10;
  Eigen::MatrixXd v = svd.matrixV().leftCols(2);
  for (int c = 0; c < 2; ++c) {
    Eigen::Index imax = 0;
    v.col(c).cwiseAbs().maxCoeff(&imax);
    if (v(imax, c) < 0.0) v.col(c) = -v.col(c);
  }
  out.coords = x * v;
  return out;
}

}  // namespace djl
