#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "mvdiff/correspondence.hpp"
#include "mvdiff/triangulation.hpp"

namespace mvdiff {

struct PairResult {
  int view_a = 0, view_b = 0;
  int n_matches = 0;
  double pair_re = 0.0;
};

// Reprojection-error report; mean_re is dimensionless (pixel error divided
// by image resolution) and averages accepted pairs only.
struct REReport {
  double mean_re = 0.0;
  std::vector<PairResult> per_pair;
  int n_rejected_pairs = 0;
};

// Per-view normalizer for "pixel error / image resolution".
inline double resolution_of(const CameraParams& cam) {
  return double(std::max(cam.width, cam.height));
}

// Triangulates every match of one view pair, reprojects into both views,
// and averages the resolution-normalized L2 errors over views and matches.
// Matches with degenerate triangulations are skipped; an all-degenerate set
// is an error.
inline double pair_re(const CorrespondenceSet& matches,
                      const CameraParams& cam_a, const CameraParams& cam_b,
                      int* n_used = nullptr) {
  require(!matches.matches.empty(), "pair_re: no matches");
  validate_camera(cam_a);
  validate_camera(cam_b);
  const double res_a = resolution_of(cam_a), res_b = resolution_of(cam_b);
  double total = 0.0;
  int used = 0;
  for (const auto& m : matches.matches) {
    const auto X =
        try_dlt_triangulate({{cam_a, m.p_a}, {cam_b, m.p_b}});
    if (!X) continue;
    const auto ra = project_point(cam_a, *X);
    const auto rb = project_point(cam_b, *X);
    if (!ra || !rb) continue;  // triangulated point behind a camera
    const double err_a = (*ra - m.p_a).norm() / res_a;
    const double err_b = (*rb - m.p_b).norm() / res_b;
    total += 0.5 * (err_a + err_b);
    ++used;
  }
  if (used == 0)
    throw DegenerateTriangulation("pair_re: all matches degenerate");
  if (n_used) *n_used = used;
  return total / used;
}

// Appendix-style dataset protocol: seeded random partition of the views
// into non-overlapping pairs, confidence filtering, minimum-match pair
// rejection, and a mean over the accepted pairs.
inline REReport dataset_re(
    const std::map<std::pair<int, int>, CorrespondenceSet>& all_sets,
    const std::vector<CameraParams>& cameras, double conf_threshold = 0.2,
    int min_matches = 5, uint64_t rng_seed = 0) {
  require(cameras.size() >= 2, "dataset_re: need at least 2 views");

  std::vector<int> order(cameras.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(rng_seed, 0x7061697273ull));  // "pairs"
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[size_t(rng.uniform_int(0, int64_t(i) - 1))]);

  REReport report;
  double total = 0.0;
  for (size_t i = 0; i + 1 < order.size(); i += 2) {
    int a = order[i], b = order[i + 1];
    if (a > b) std::swap(a, b);

    CorrespondenceSet surviving;
    surviving.view_a = a;
    surviving.view_b = b;
    auto it = all_sets.find({a, b});
    if (it != all_sets.end()) {
      for (const auto& m : it->second.matches)
        if (m.confidence > conf_threshold) surviving.matches.push_back(m);
    }
    if (int(surviving.matches.size()) < min_matches) {
      ++report.n_rejected_pairs;
      continue;
    }
    PairResult pr;
    pr.view_a = a;
    pr.view_b = b;
    pr.pair_re = pair_re(surviving, cameras[size_t(a)], cameras[size_t(b)],
                         &pr.n_matches);
    total += pr.pair_re;
    report.per_pair.push_back(pr);
  }
  if (report.per_pair.empty())
    throw Error("dataset_re: no valid pairs");
  report.mean_re = total / double(report.per_pair.size());
  return report;
}

inline void write_re_report(const REReport& r, std::ostream& text,
                            std::ostream& csv) {
  text << "reprojection error report\n";
  text << "mean_re " << r.mean_re << "\n";
  text << "pairs_used " << r.per_pair.size() << "\n";
  text << "pairs_rejected " << r.n_rejected_pairs << "\n";
  for (const auto& p : r.per_pair)
    text << "pair " << p.view_a << " " << p.view_b << " matches " << p.n_matches
         << " re " << p.pair_re << "\n";
  csv << "mean_re,pairs_used,pairs_rejected\n";
  csv << r.mean_re << "," << r.per_pair.size() << "," << r.n_rejected_pairs
      << "\n";
}

}  // namespace mvdiff
