#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "qa/annotation.hpp"

namespace qa {

/// A scripted annotator. Control failures are planted per task id; real
/// items follow the ground truth with an independent flip probability.
struct SimulatedWorker {
    std::string worker_id;
    /// Tasks on which the worker marks the negative control as equivalent.
    std::set<std::string> fail_controls_on;
    double flip_rate = 0.0;
};

struct Assignment {
    std::string task_id;
    std::string worker_id;
};

using GroundTruth = std::function<int(const CandidateRef&)>;

/// Produces one judgment per assignment. Every random draw is keyed by
/// (seed, worker, task, item), so the output does not depend on the order
/// of `assignments`. Throws ArgumentError for unknown tasks or workers.
std::vector<Judgment> simulate_judgments(std::span<const AnnotationTask> tasks,
                                         std::span<const Assignment> assignments,
                                         std::span<const SimulatedWorker> workers, const GroundTruth& truth,
                                         std::uint64_t seed);

/// Round-robin assignment of each task to `per_task` distinct workers.
std::vector<Assignment> assign_round_robin(std::span<const AnnotationTask> tasks,
                                           std::span<const std::string> worker_ids, std::size_t per_task);

/// Assigns every task that holds a NEEDS_TIEBREAK (or vote-less) item to
/// `worker_id`, once per task.
std::vector<Assignment> tiebreak_assignments(std::span<const AnnotationTask> tasks,
                                             std::span<const AggregatedLabel> labels, const std::string& worker_id);

}  // namespace qa
