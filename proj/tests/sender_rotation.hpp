// Receiver/sender fixture where only the sender's neighbourhood rotates.
#pragma once

#include <Eigen/Geometry>

#include "lframes/datasets.hpp"
#include "lframes/mp.hpp"

namespace lframes::test {

struct SenderRotationOutcome {
  double scalar_output_diff = 0.0;     // message-layer output at the receiver
  double tensorial_output_diff = 0.0;
  double tensorial_received_diff = 0.0;  // received local vector
  /// |R_i^T m' - Q R_i^T m| for the tensorial received vector m.
  double received_rotation_error = 0.0;
};

/// Rotations of the sender's neighbourhood that move its center-of-mass vector.
inline std::vector<Orthogonal> sender_rotations() {
  auto rot = [](double angle, const Eigen::Vector3d& axis) {
    return Orthogonal(Eigen::MatrixXd(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix()));
  };
  return {rot(M_PI / 2, {0, 0, 1}), rot(M_PI, {1, 0, 0}), rot(M_PI / 2, {0, 1, 0})};
}

/// With `pass_through` the message network copies the received feature and the
/// update network returns the aggregate, so the layer output is the message
/// itself; otherwise both are random two-layer networks.
inline SenderRotationOutcome run_sender_rotation(const Orthogonal& q, bool pass_through, std::uint64_t seed = 1) {
  const SenderRotationFixture f = make_sender_rotation_fixture(q);
  const RepSpec spec = RepSpec::parse("1x1n");
  const int w = spec.width();
  Rng rng(seed);
  MessageOptions base;
  base.radial_max = f.frame_radius * 2;
  nn::Mlp phi, psi;
  if (pass_through) {
    // Message input columns: receiver features, received features, radial, direction.
    phi = nn::Mlp("phi", {message_input_width(spec, base), w}, rng);
    psi = nn::Mlp("psi", {w + w, w}, rng);
    for (nn::Mlp* m : {&phi, &psi}) {
      m->weights()[0].value.setZero();
      m->biases()[0].value.setZero();
      for (int k = 0; k < w; ++k) m->weights()[0].value(w + k, k) = 1.0;
    }
  } else {
    phi = nn::Mlp("phi", {message_input_width(spec, base), 16, 8}, rng);
    psi = nn::Mlp("psi", {w + 8, 16, 4}, rng);
  }

  struct Run {
    Matrix received;
    Matrix output;
    Matrix receiver_frame;
  };
  auto run = [&](const PointCloud& c, MessageMode mode) {
    const FrameSet frames = build_pca_frames(c, radius_graph(c, f.frame_radius));
    const FeatureBlock local = canonicalize_in(c, frames, spec);
    nn::Tape tape;
    nn::Var fr = tape.constant(frames.rows);
    nn::Var x = tape.constant(local.values);
    MessageOptions opt = base;
    opt.mode = mode;
    Run r;
    r.received = received_features(f.message_graph, fr, fr, x, spec, mode).value();
    r.output = message_layer(tape, f.message_graph, fr, x, spec, phi, psi, opt, false).value().row(f.receiver);
    r.receiver_frame = frames.frame(f.receiver).matrix();
    return r;
  };

  SenderRotationOutcome o;
  const Run s0 = run(f.original, MessageMode::scalar), s1 = run(f.rotated, MessageMode::scalar);
  const Run t0 = run(f.original, MessageMode::tensorial), t1 = run(f.rotated, MessageMode::tensorial);
  o.scalar_output_diff = (s0.output - s1.output).cwiseAbs().maxCoeff();
  o.tensorial_output_diff = (t0.output - t1.output).cwiseAbs().maxCoeff();
  o.tensorial_received_diff = (t0.received - t1.received).cwiseAbs().maxCoeff();
  const Eigen::Vector3d g0 = t0.receiver_frame.transpose() * t0.received.row(0).transpose();
  const Eigen::Vector3d g1 = t1.receiver_frame.transpose() * t1.received.row(0).transpose();
  o.received_rotation_error = (g1 - q.matrix() * g0).cwiseAbs().maxCoeff();
  return o;
}

}  // namespace lframes::test
