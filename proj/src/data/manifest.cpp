// SPDX-License-Identifier: Apache-2.0
#include "mfn/data/manifest.hpp"

#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "mfn/common/errors.hpp"
#include "mfn/common/parallel.hpp"
#include "mfn/data/mvol.hpp"

namespace mfn::data {

using nlohmann::json;

std::vector<StudyRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path q(p);
        return q.is_absolute() ? q : base / q;
    };
    std::vector<StudyRecord> out;
    std::unordered_set<std::string> ids;
    try {
        const json doc = json::parse(in);
        if (!doc.is_array()) throw DataError("manifest " + path.string() + " must be a JSON array");
        for (const auto& entry : doc) {
            StudyRecord r;
            r.id = entry.at("id").get<std::string>();
            r.ct_path = resolve(entry.at("ct_path").get<std::string>());
            r.pet_path = resolve(entry.at("pet_path").get<std::string>());
            r.mask_path = resolve(entry.at("mask_path").get<std::string>());
            r.label = entry.at("label").get<int>();
            if (r.label != 0 && r.label != 1) throw DataError("study '" + r.id + "' has a label other than 0/1");
            if (!ids.insert(r.id).second) throw DataError("duplicate study id '" + r.id + "'");
            const auto& m = entry.at("meta");
            r.meta.rescale_slope = m.at("rescale_slope").get<double>();
            r.meta.rescale_intercept = m.at("rescale_intercept").get<double>();
            r.meta.injected_dose_mbq = m.at("injected_dose_mbq").get<double>();
            r.meta.body_weight_kg = m.at("body_weight_kg").get<double>();
            r.meta.injection_to_scan_min = m.at("injection_to_scan_min").get<double>();
            r.meta.tracer_half_life_min = m.value("tracer_half_life_min", r.meta.tracer_half_life_min);
            const auto photometric = m.value("photometric", std::string("standard"));
            if (photometric == "inverted") {
                r.meta.photometric = preprocess::Photometric::inverted;
            } else if (photometric != "standard") {
                throw DataError("study '" + r.id + "': unknown photometric value '" + photometric + "'");
            }
            r.meta.validate();
            out.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + path.string() + ": " + e.what());
    }
    return out;
}

void write_manifest(const std::vector<StudyRecord>& records, const std::filesystem::path& path) {
    json doc = json::array();
    for (const auto& r : records) {
        doc.push_back({{"id", r.id},
                       {"ct_path", r.ct_path.generic_string()},
                       {"pet_path", r.pet_path.generic_string()},
                       {"mask_path", r.mask_path.generic_string()},
                       {"label", r.label},
                       {"meta",
                        {{"rescale_slope", r.meta.rescale_slope},
                         {"rescale_intercept", r.meta.rescale_intercept},
                         {"injected_dose_mbq", r.meta.injected_dose_mbq},
                         {"body_weight_kg", r.meta.body_weight_kg},
                         {"injection_to_scan_min", r.meta.injection_to_scan_min},
                         {"tracer_half_life_min", r.meta.tracer_half_life_min},
                         {"photometric",
                          r.meta.photometric == preprocess::Photometric::inverted ? "inverted" : "standard"}}}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw DataError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& manifest, const preprocess::PipelineOptions& options,
                     int workers) {
    const auto records = read_manifest(manifest);
    Dataset ds;
    ds.shape = options.out_shape;
    ds.samples.resize(records.size());
    parallel_for(records.size(), workers, [&](std::size_t i) {
        const auto& r = records[i];
        auto pair = preprocess::preprocess_study(read_mvol(r.ct_path), read_mvol(r.pet_path), read_mvol(r.mask_path),
                                                 r.meta, options);
        ds.samples[i] = {r.id, r.label, std::move(pair.ct.data), std::move(pair.pet.data)};
    });
    ds.validate();
    return ds;
}

} // namespace mfn::data
