#include "qa/simulation.hpp"

#include <map>

#include <fmt/format.h>

#include "qa/errors.hpp"
#include "qa/text.hpp"

namespace qa {

std::vector<Judgment> simulate_judgments(std::span<const AnnotationTask> tasks,
                                         std::span<const Assignment> assignments,
                                         std::span<const SimulatedWorker> workers, const GroundTruth& truth,
                                         std::uint64_t seed) {
    std::map<std::string, const AnnotationTask*> by_task;
    for (const auto& t : tasks) by_task[t.task_id] = &t;
    std::map<std::string, const SimulatedWorker*> by_worker;
    for (const auto& w : workers) by_worker[w.worker_id] = &w;

    std::vector<Judgment> out;
    out.reserve(assignments.size());
    for (const auto& a : assignments) {
        auto t = by_task.find(a.task_id);
        if (t == by_task.end()) throw ArgumentError(fmt::format("assignment for unknown task '{}'", a.task_id));
        auto w = by_worker.find(a.worker_id);
        if (w == by_worker.end()) throw ArgumentError(fmt::format("assignment for unknown worker '{}'", a.worker_id));
        const auto& task = *t->second;
        const auto& worker = *w->second;

        Judgment j;
        j.worker_id = worker.worker_id;
        j.task_id = task.task_id;
        j.submitted_at = "simulated";
        const bool fail = worker.fail_controls_on.count(task.task_id) != 0;
        for (std::size_t i = 0; i < task.items.size(); ++i) {
            const auto& item = task.items[i];
            int label = 1;
            switch (item.kind) {
                case ItemKind::positive_control:
                case ItemKind::padding_control: label = 1; break;
                case ItemKind::negative_control: label = fail ? 1 : 0; break;
                case ItemKind::real: {
                    label = truth(*item.ref);
                    const auto h = stable_hash(fmt::format("{}\x1f{}\x1f{}", worker.worker_id, task.task_id, i), seed);
                    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
                    if (u < worker.flip_rate) label = 1 - label;
                    break;
                }
            }
            j.labels.push_back(label);
        }
        out.push_back(std::move(j));
    }
    return out;
}

std::vector<Assignment> assign_round_robin(std::span<const AnnotationTask> tasks,
                                           std::span<const std::string> worker_ids, std::size_t per_task) {
    if (per_task > worker_ids.size())
        throw ArgumentError(fmt::format("{} annotators per task but only {} workers", per_task, worker_ids.size()));
    std::vector<Assignment> out;
    std::size_t next = 0;
    for (const auto& task : tasks) {
        for (std::size_t i = 0; i < per_task; ++i)
            out.push_back(Assignment{task.task_id, worker_ids[(next + i) % worker_ids.size()]});
        next = (next + 1) % worker_ids.size();
    }
    return out;
}

std::vector<Assignment> tiebreak_assignments(std::span<const AnnotationTask> tasks,
                                             std::span<const AggregatedLabel> labels, const std::string& worker_id) {
    std::set<std::pair<std::size_t, std::uint64_t>> open;
    for (const auto& l : labels) {
        if (!l.label || *l.label == FinalLabel::needs_tiebreak) open.insert(l.ref.key());
    }
    std::vector<Assignment> out;
    for (const auto& task : tasks) {
        for (const auto& item : task.items) {
            if (item.kind == ItemKind::real && open.count(item.ref->key())) {
                out.push_back(Assignment{task.task_id, worker_id});
                break;
            }
        }
    }
    return out;
}

}  // namespace qa
