#include "contcl/memory.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include <json.hpp>

#include "contcl/errors.hpp"
#include "contcl/rng.hpp"

namespace contcl {

namespace {

double sq_distance(const double* a, const double* b, std::size_t d) {
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        sq += diff * diff;
    }
    return sq;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, int k, std::uint64_t seed) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (k < 1) throw config_error("kmeans: k must be >= 1");
    if (n == 0) throw input_error("kmeans: no points");

    if (static_cast<std::size_t>(k) >= n) {
        KMeansResult res;
        res.centroids = points;
        res.assignments.resize(n);
        std::iota(res.assignments.begin(), res.assignments.end(), 0);
        res.objective_trace.push_back(0.0);
        return res;
    }

    // Seeded uniform init on k distinct points (partial Fisher-Yates).
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(seed, "kmeans-init");
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), n - 1);
        std::swap(order[static_cast<std::size_t>(i)], order[pick(rng)]);
    }
    Tensor centroids({static_cast<std::size_t>(k), d});
    for (int c = 0; c < k; ++c) {
        const double* src = points.data() + order[static_cast<std::size_t>(c)] * d;
        std::copy(src, src + d, centroids.data() + static_cast<std::size_t>(c) * d);
    }

    KMeansResult res;
    res.assignments.assign(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = points.data() + i * d;
            int best = 0;
            double best_sq = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double sq = sq_distance(p, centroids.data() + static_cast<std::size_t>(c) * d, d);
                if (sq < best_sq) {
                    best_sq = sq;
                    best = c;
                }
            }
            objective += best_sq;
            if (res.assignments[i] != best) {
                res.assignments[i] = best;
                changed = true;
            }
        }
        res.objective_trace.push_back(objective);
        if (!changed) break;

        Tensor sums({static_cast<std::size_t>(k), d});
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const int c = res.assignments[i];
            ++counts[static_cast<std::size_t>(c)];
            const double* p = points.data() + i * d;
            double* s = sums.data() + static_cast<std::size_t>(c) * d;
            for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
        }
        for (int c = 0; c < k; ++c) {
            // An emptied cluster keeps its previous centroid.
            if (counts[static_cast<std::size_t>(c)] == 0) continue;
            const double inv = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            const double* s = sums.data() + static_cast<std::size_t>(c) * d;
            double* dst = centroids.data() + static_cast<std::size_t>(c) * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] = s[j] * inv;
        }
    }
    res.centroids = std::move(centroids);
    return res;
}

std::vector<int> select_memory(const std::vector<int>& instance_ids, const Tensor& reps,
                               int budget, std::uint64_t seed) {
    const std::size_t n = instance_ids.size();
    if (n == 0) throw input_error("select_memory: empty class");
    if (reps.rows() != n) {
        throw shape_error("select_memory: one representation per instance required");
    }
    if (budget <= 0) return {};
    if (n <= static_cast<std::size_t>(budget)) {
        std::vector<int> all = instance_ids;
        std::sort(all.begin(), all.end());
        return all;
    }

    const KMeansResult km = kmeans(reps, budget, seed);
    const std::size_t d = reps.cols();

    std::vector<char> used(n, 0);
    std::vector<int> selected;
    selected.reserve(static_cast<std::size_t>(budget));
    for (int c = 0; c < budget; ++c) {
        const double* centroid = km.centroids.data() + static_cast<std::size_t>(c) * d;
        std::size_t best = n;
        double best_sq = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            const double sq = sq_distance(reps.data() + i * d, centroid, d);
            if (sq < best_sq || (sq == best_sq && best < n && instance_ids[i] < instance_ids[best])) {
                best_sq = sq;
                best = i;
            }
        }
        used[best] = 1;
        selected.push_back(instance_ids[best]);
    }
    return selected;
}

void MemoryBank::set_class(int class_id, std::vector<int> instance_ids) {
    for (std::size_t i = 0; i < instance_ids.size(); ++i) {
        for (std::size_t j = i + 1; j < instance_ids.size(); ++j) {
            if (instance_ids[i] == instance_ids[j]) {
                throw input_error("MemoryBank: duplicate instance id " +
                                  std::to_string(instance_ids[i]));
            }
        }
    }
    if (instance_ids.size() > static_cast<std::size_t>(std::max(budget_, 0))) {
        throw input_error("MemoryBank: class exceeds budget");
    }
    if (instance_ids.empty()) return;
    by_class_[class_id] = std::move(instance_ids);
}

std::size_t MemoryBank::total_instances() const {
    std::size_t total = 0;
    for (const auto& [cls, ids] : by_class_) total += ids.size();
    return total;
}

std::vector<int> MemoryBank::all_instance_ids() const {
    std::vector<int> out;
    out.reserve(total_instances());
    for (const auto& [cls, ids] : by_class_) {
        out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
}

void MemoryBank::save(const std::filesystem::path& path) const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [cls, ids] : by_class_) {
        for (int id : ids) entries.push_back({cls, id});
    }
    nlohmann::json j{{"budget", budget_}, {"entries", entries}};
    std::ofstream out(path);
    if (!out) throw input_error("MemoryBank::save: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

MemoryBank MemoryBank::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("MemoryBank::load: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error("MemoryBank::load: " + std::string(e.what()));
    }
    MemoryBank bank(j.at("budget").get<int>());
    std::map<int, std::vector<int>> grouped;
    for (const auto& entry : j.at("entries")) {
        grouped[entry.at(0).get<int>()].push_back(entry.at(1).get<int>());
    }
    for (auto& [cls, ids] : grouped) bank.set_class(cls, std::move(ids));
    return bank;
}

}  // namespace contcl
