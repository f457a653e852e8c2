#pragma once

// Brute-force references for matching and average precision.

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "tse/detection.hpp"
#include "tse/rng.hpp"

namespace tse::testing {

// Enumerates every assignment of detections to ground truths and keeps the one
// that satisfies the greedy rule at each step. Returns per-detection labels in
// the original detection order (-1 for false positives).
inline std::vector<int> brute_force_match(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                          double thresh) {
    const std::size_t n = dets.size(), g = gts.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
    auto overlap = [&](std::size_t d, std::size_t k) {
        return dets[d].image_id == gts[k].image_id ? iou(dets[d].box, gts[k].box) : -1.0;
    };
    std::vector<int> assign(n, -1), found;
    int solutions = 0;
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= g + 1;
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = static_cast<int>(c % (g + 1)) - 1;
            c /= g + 1;
        }
        std::set<int> used;
        bool ok = true;
        for (std::size_t rank = 0; ok && rank < n; ++rank) {
            const std::size_t d = order[rank];
            double best = -1.0;
            int best_k = -1;
            for (std::size_t k = 0; k < g; ++k) {
                if (used.count(static_cast<int>(k))) continue;
                if (overlap(d, k) > best) {
                    best = overlap(d, k);
                    best_k = static_cast<int>(k);
                }
            }
            const int expect = best >= thresh ? best_k : -1;
            ok = assign[d] == expect;
            if (assign[d] >= 0) used.insert(assign[d]);
        }
        if (ok) {
            ++solutions;
            found = assign;
        }
    }
    return solutions == 1 ? found : std::vector<int>{};
}

// Walks every distinct confidence threshold, scores the detections kept at
// that threshold, and integrates max precision over recall levels.
inline double brute_force_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double thresh) {
    std::set<double> thresholds;
    for (const auto& d : dets) thresholds.insert(d.confidence);
    struct Point {
        double recall, precision;
    };
    std::vector<Point> points;
    const auto labels = brute_force_match(dets, gts, thresh);
    for (double t : thresholds) {
        double tp = 0, kept = 0;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (dets[i].confidence < t) continue;
            ++kept;
            tp += labels[i] >= 0;
        }
        points.push_back({tp / static_cast<double>(gts.size()), tp / kept});
    }
    std::set<double> levels;
    for (const auto& p : points) levels.insert(p.recall);
    double ap = 0.0, prev = 0.0;
    for (double r : levels) {
        if (r <= 0.0) continue;
        double best = 0.0;
        for (const auto& p : points)
            if (p.recall >= r) best = std::max(best, p.precision);
        ap += (r - prev) * best;
        prev = r;
    }
    return ap;
}

struct DetectionInstance {
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
};

// Up to max_dets detections on two images, most of them jittered copies of a
// ground truth box. Confidences sometimes come from a coarse grid to force ties.
inline DetectionInstance random_detection_instance(Rng& rng, std::size_t max_dets = 6, std::size_t max_gts = 4) {
    DetectionInstance inst;
    const std::size_t n_gt = 1 + rng.below(max_gts);
    for (std::size_t i = 0; i < n_gt; ++i) {
        const double x = rng.uniform(0, 0.7), y = rng.uniform(0, 0.7);
        inst.gts.push_back({rng.below(2) ? "a" : "b", 0, {x, y, x + rng.uniform(0.1, 0.3), y + rng.uniform(0.1, 0.3)}});
    }
    const bool coarse = rng.below(2) == 0;
    const std::size_t n_det = rng.below(max_dets + 1);
    for (std::size_t i = 0; i < n_det; ++i) {
        Detection d;
        d.class_id = 0;
        d.confidence = coarse ? static_cast<double>(1 + rng.below(4)) / 4.0 : rng.uniform();
        if (rng.below(4) != 0) {
            const auto& g = inst.gts[rng.below(inst.gts.size())];
            const double s = rng.uniform(0, 0.04);
            d.image_id = g.image_id;
            d.box = {g.box.x_min + rng.uniform(-s, s), g.box.y_min + rng.uniform(-s, s), g.box.x_max + rng.uniform(-s, s),
                     g.box.y_max + rng.uniform(-s, s)};
        } else {
            const double x = rng.uniform(0, 0.8), y = rng.uniform(0, 0.8);
            d.image_id = rng.below(2) ? "a" : "b";
            d.box = {x, y, x + rng.uniform(0.05, 0.2), y + rng.uniform(0.05, 0.2)};
        }
        inst.dets.push_back(d);
    }
    return inst;
}

}  // namespace tse::testing
