#pragma once

// JSON mapping for the configuration structs. Missing keys keep their
// defaults, so partial override files are accepted.

#include "json.hpp"
#include "polarloc/baselines.hpp"
#include "polarloc/data.hpp"
#include "polarloc/layers.hpp"
#include "polarloc/network.hpp"
#include "polarloc/optim.hpp"
#include "polarloc/synthetic.hpp"
#include "polarloc/training.hpp"

namespace ploc {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EcaSpec, kernel_size)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GemSpec, initial_p, eps, min_p)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NetworkConfig, angular_bins, radial_bins, block_channels,
                                                lateral_channels, descriptor_dim, stem_kernel, eca, gem)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TripletLossSpec, margin)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamConfig, lr, beta1, beta2, eps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FilterRules, min_displacement_m, pose_tolerance_s, angular_bins,
                                                radial_bins)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PairThresholds, positive_radius_m, negative_radius_m)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AugmentationSpec, erase_probability, erase_area_min, erase_area_max,
                                                erase_aspect_min, erase_aspect_max, cyclic_shift)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, epochs, batch_size, loss, adam, thresholds, augmentation,
                                                seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SyntheticWorldSpec, world_size_m, landmark_count,
                                                landmark_radius_min_m, landmark_radius_max_m, route_clearance_m,
                                                max_range_m, angular_bins, radial_bins, noise_sigma,
                                                speckle_probability, hit_decay, max_hits_per_ray, radial_spread_bins,
                                                train_waypoints, eval_waypoints, train_scans, map_scans, query_scans,
                                                lateral_jitter_m, heading_jitter_rad, landmark_dropout,
                                                parked_per_100m, parked_offset_min_m, parked_offset_max_m,
                                                moving_objects_mean, moving_range_min_m, moving_range_max_m,
                                                clutter_radius_min_m, clutter_radius_max_m, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ScanContextSpec, sectors, rings)

}  // namespace ploc
