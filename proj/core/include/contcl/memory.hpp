#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "contcl/tensor.hpp"

namespace contcl {

struct KMeansResult {
    Tensor centroids;                     // {k, d}
    std::vector<int> assignments;         // one centroid index per point
    std::vector<double> objective_trace;  // sum of squared distances, per iteration
};

// Lloyd's algorithm with seeded uniform sampling of k distinct points as
// initialization; stops when assignments stabilize or after 100 iterations.
// With k >= #points every point becomes its own singleton cluster.
KMeansResult kmeans(const Tensor& points, int k, std::uint64_t seed);

// One exemplar per centroid: the instance closest in Euclidean distance, ties
// broken by lowest instance id, duplicates resolved by the next-closest
// unused instance. Returns all ids when there are at most `budget` instances.
std::vector<int> select_memory(const std::vector<int>& instance_ids, const Tensor& reps,
                               int budget, std::uint64_t seed);

// Per-class exemplar ids, at most `budget` per class.
class MemoryBank {
public:
    explicit MemoryBank(int budget = 10) : budget_(budget) {}

    int budget() const { return budget_; }
    void set_class(int class_id, std::vector<int> instance_ids);
    bool empty() const { return by_class_.empty(); }
    std::size_t total_instances() const;
    const std::map<int, std::vector<int>>& by_class() const { return by_class_; }
    // All stored instance ids in (class id, selection) order.
    std::vector<int> all_instance_ids() const;

    void save(const std::filesystem::path& path) const;
    static MemoryBank load(const std::filesystem::path& path);

private:
    int budget_;
    std::map<int, std::vector<int>> by_class_;
};

}  // namespace contcl
