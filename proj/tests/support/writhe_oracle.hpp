#pragma once

// Brute-force numeric double integral of the Gauss kernel over segment pairs.
// Independent of the production solid-angle path; used only as a test oracle.

#include <vector>

#include "adqsim/geometry.hpp"

namespace adq::testsupport {

using geom::Vec3;

// 16-point Gauss-Legendre nodes/weights on [-1, 1].
inline const double kGlNodes[16] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318,
    -0.7554044083550030, -0.6178762444026438, -0.4580167776572274,
    -0.2816035507792589, -0.0950125098376374, 0.0950125098376374,
    0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,
    0.9894009349916499};
inline const double kGlWeights[16] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928,
    0.1246289712555339, 0.1495959888165767, 0.1691565193950025,
    0.1826034150449236, 0.1894506104550685, 0.1894506104550685,
    0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479,
    0.0271524594117541};

// Gauss-kernel integral over one ordered segment pair via composite 16-point
// Gauss-Legendre with `panels` panels per segment (>= 200 points per edge
// when panels >= 13).
inline double quadrature_pair_writhe(const Vec3& a0, const Vec3& a1,
                                     const Vec3& b0, const Vec3& b1,
                                     int panels = 16) {
  const Vec3 ta = a1 - a0;  // unnormalized tangents absorb the ds factors
  const Vec3 tb = b1 - b0;
  const Vec3 cross = ta.cross(tb);
  double total = 0.0;
  for (int pa = 0; pa < panels; ++pa) {
    for (int ia = 0; ia < 16; ++ia) {
      const double s = (pa + 0.5 + 0.5 * kGlNodes[ia]) / panels;
      const double ws = 0.5 * kGlWeights[ia] / panels;
      const Vec3 xa = a0 + s * ta;
      for (int pb = 0; pb < panels; ++pb) {
        for (int ib = 0; ib < 16; ++ib) {
          const double u = (pb + 0.5 + 0.5 * kGlNodes[ib]) / panels;
          const double wu = 0.5 * kGlWeights[ib] / panels;
          const Vec3 r = xa - (b0 + u * tb);
          const double d = r.norm();
          if (d < 1e-12) continue;
          total += ws * wu * cross.dot(r) / (d * d * d);
        }
      }
    }
  }
  return total;
}

// Full-curve oracle: sum the quadrature kernel over ordered non-adjacent edge
// pairs, normalized by 4*pi (same pair-exclusion convention as production).
inline double quadrature_writhe(const std::vector<Vec3>& pts, int panels = 16) {
  const int edges = static_cast<int>(pts.size()) - 1;
  double sum = 0.0;
  for (int i = 0; i < edges; ++i)
    for (int j = i + 2; j < edges; ++j)
      sum += quadrature_pair_writhe(pts[i], pts[i + 1], pts[j], pts[j + 1], panels);
  return 2.0 * sum / (4.0 * M_PI);
}

}  // namespace adq::testsupport
