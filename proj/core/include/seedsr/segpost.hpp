#pragma once

#include <string>
#include <vector>

#include "seedsr/grid.hpp"
#include "seedsr/tensor.hpp"

namespace seedsr {

// Pointwise arithmetic mean of equal-shaped logit grids.
Tensor ensemble_mean(const std::vector<Tensor>& logit_grids);

// sigmoid(logit) > threshold, strict at the boundary.
ByteGrid semantic_mask(const Tensor& logits, double threshold = 0.5);

// Exact squared Euclidean distance transform to the nearest background pixel;
// the region outside the image counts as background.
std::vector<double> distance_transform(const ByteGrid& mask);

// Marker-based priority-flood watershed on the negative distance transform.
// Markers are 8-neighborhood maxima of the distance map thinned greedily to a
// minimum pairwise separation; floods over 4-neighbors in decreasing distance
// with (distance, row-major index, insertion age) priority. Instance ids are
// contiguous, renumbered by first scan-order appearance.
IntGrid watershed_instances(const ByteGrid& semantic, double min_marker_dist = 5.0);

struct SegmentationResult {
    Tensor logits;
    ByteGrid semantic;
    IntGrid instances;
};

SegmentationResult segment(const std::vector<Tensor>& logit_grids, double threshold,
                           double min_marker_dist);

void write_pgm(const std::string& path, const ByteGrid& mask);
void write_instance_csv(const std::string& path, const IntGrid& instances);

}  // namespace seedsr
