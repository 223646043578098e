#include <algorithm>
#include <map>

#include "gdpo/datagen.hpp"
#include "gdpo/error.hpp"
#include "phrasebook.hpp"

namespace gdpo {

ClassBeliefMap::ClassBeliefMap(std::vector<std::pair<std::string, BeliefClass>> entries) {
    std::map<std::string, BeliefClass> unique;
    for (auto& [description, cls] : entries) {
        auto [it, inserted] = unique.emplace(description, cls);
        if (!inserted && it->second != cls) {
            throw DataError("class-belief map lists \"" + description + "\" under two classes");
        }
    }
    entries_.assign(unique.begin(), unique.end());
}

const ClassBeliefMap& ClassBeliefMap::standard() {
    static const ClassBeliefMap map = [] {
        std::vector<std::pair<std::string, BeliefClass>> rows;
        for (const phrasebook::Scale& scale : phrasebook::kScales) {
            for (std::size_t j = 0; j < scale.by_degree.size(); ++j) {
                rows.emplace_back(std::string(scale.by_degree[j]), BeliefClass{5 - static_cast<int>(j)});
            }
        }
        rows.emplace_back(std::string(phrasebook::kRefusal), BeliefClass{0});
        for (std::size_t r = 0; r < phrasebook::kRatings.size(); ++r) {
            rows.emplace_back(std::string(phrasebook::kRatings[r]), BeliefClass{static_cast<int>(r) + 1});
        }
        for (const phrasebook::MapRow& row : phrasebook::kExtraMapRows) {
            rows.emplace_back(std::string(row.description), BeliefClass{row.cls});
        }
        return ClassBeliefMap(std::move(rows));
    }();
    return map;
}

std::optional<BeliefClass> ClassBeliefMap::find(std::span<const std::string> description) const {
    const std::string key = join_words(description);
    auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                               [](const auto& entry, const std::string& k) { return entry.first < k; });
    if (it == entries_.end() || it->first != key) {
        return std::nullopt;
    }
    return it->second;
}

BeliefClass map_belief_to_class(std::span<const std::string> description, const ClassBeliefMap& map) {
    if (auto cls = map.find(description)) {
        return *cls;
    }
    throw DataError("unmapped belief: \"" + join_words(description) + "\"");
}

}  // namespace gdpo
