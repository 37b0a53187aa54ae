#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "phenoseq/data.hpp"

namespace phenoseq {

void ImageSequence::validate() const {
    if (frames.size() != session_indices.size()) {
        throw ValidationError("sequence " + plant_id + ": " + std::to_string(frames.size()) + " frames but " +
                              std::to_string(session_indices.size()) + " session indices");
    }
    for (std::size_t t = 0; t < frames.size(); ++t) {
        if (frames[t].rank() != 3 || frames[t].dim(0) != 3) {
            throw ShapeError("sequence " + plant_id + ": frame " + std::to_string(t) + " has shape " +
                             shape_to_string(frames[t].shape()) + ", expected [3 x h x w]");
        }
        if (!frames[t].same_shape(frames[0])) {
            throw ShapeError("sequence " + plant_id + ": frame " + std::to_string(t) + " shape " +
                             shape_to_string(frames[t].shape()) + " differs from " +
                             shape_to_string(frames[0].shape()));
        }
        if (t > 0 && session_indices[t] <= session_indices[t - 1]) {
            throw ValidationError("sequence " + plant_id + ": session indices not ascending");
        }
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

int parse_int_field(const std::string& text, std::size_t row, const char* what) {
    int value = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || end != text.data() + text.size()) {
        throw ValidationError("manifest row " + std::to_string(row) + ": invalid " + what + " '" + text + "'");
    }
    return value;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open manifest " + manifest_path.string());
    std::string line;
    if (!std::getline(in, line)) return {};
    if (strip_cr(line) != kManifestHeader) {
        throw ValidationError("manifest row 1: expected header '" + std::string(kManifestHeader) + "'");
    }
    std::vector<ManifestRow> rows;
    std::size_t row_number = 1;
    while (std::getline(in, line)) {
        ++row_number;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 6) {
            throw ValidationError("manifest row " + std::to_string(row_number) + ": expected 6 fields, got " +
                                  std::to_string(fields.size()));
        }
        ManifestRow row;
        row.path = fields[0];
        row.plant_id = fields[1];
        row.species = fields[2];
        try {
            row.label = parse_class(fields[3]);
        } catch (const ValidationError& e) {
            throw ValidationError("manifest row " + std::to_string(row_number) + ": " + e.what());
        }
        row.session = parse_int_field(fields[4], row_number, "session");
        row.angle = parse_int_field(fields[5], row_number, "angle");
        if (row.path.empty() || row.plant_id.empty()) {
            throw ValidationError("manifest row " + std::to_string(row_number) + ": empty path or plant_id");
        }
        if (row.session < 1 || row.session > kMaxSessions) {
            throw ValidationError("manifest row " + std::to_string(row_number) + ": session " +
                                  std::to_string(row.session) + " outside 1.." + std::to_string(kMaxSessions));
        }
        if (row.angle < 0 || row.angle >= kAngles) {
            throw ValidationError("manifest row " + std::to_string(row_number) + ": angle " +
                                  std::to_string(row.angle) + " outside 0.." + std::to_string(kAngles - 1));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_manifest(const std::filesystem::path& manifest_path, const std::vector<ManifestRow>& rows) {
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest " + manifest_path.string());
    out << kManifestHeader << '\n';
    for (const auto& r : rows) {
        out << r.path << ',' << r.plant_id << ',' << r.species << ',' << class_code(r.label) << ',' << r.session
            << ',' << r.angle << '\n';
    }
}

std::vector<ImageSequence> load_dataset(const std::filesystem::path& manifest_path) {
    const std::vector<ManifestRow> rows = read_manifest(manifest_path);
    const std::filesystem::path base = manifest_path.parent_path();

    using Key = std::tuple<std::string, std::size_t, std::string, int>;  // species, class, plant, angle
    struct Pending {
        std::vector<std::pair<int, std::size_t>> sessions;  // (session, row index)
    };
    std::map<Key, Pending> groups;
    std::map<std::pair<std::string, std::string>, StressClass> plant_class;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const ManifestRow& r = rows[i];
        const auto [it, inserted] = plant_class.emplace(std::make_pair(r.species, r.plant_id), r.label);
        if (!inserted && it->second != r.label) {
            throw ValidationError("manifest row " + std::to_string(i + 2) + ": plant " + r.plant_id +
                                  " labelled with more than one class");
        }
        groups[Key{r.species, class_index(r.label), r.plant_id, r.angle}].sessions.emplace_back(r.session, i);
    }

    std::vector<ImageSequence> out;
    out.reserve(groups.size());
    Shape frame_shape;
    for (auto& [key, pending] : groups) {
        std::sort(pending.sessions.begin(), pending.sessions.end());
        ImageSequence seq;
        seq.species = std::get<0>(key);
        seq.label = class_from_index(std::get<1>(key));
        seq.plant_id = std::get<2>(key);
        seq.angle_index = std::get<3>(key);
        for (std::size_t j = 0; j < pending.sessions.size(); ++j) {
            const auto [session, row_index] = pending.sessions[j];
            const std::size_t row_number = row_index + 2;
            if (j > 0 && session == pending.sessions[j - 1].first) {
                throw ValidationError("manifest row " + std::to_string(row_number) + ": duplicate session " +
                                      std::to_string(session) + " for plant " + seq.plant_id);
            }
            const std::filesystem::path file = base / rows[row_index].path;
            if (!std::filesystem::exists(file)) {
                throw ValidationError("manifest row " + std::to_string(row_number) + ": missing file " + file.string());
            }
            Tensor frame;
            try {
                frame = read_ppm(file);
            } catch (const ValidationError& e) {
                throw ValidationError("manifest row " + std::to_string(row_number) + ": " + e.what());
            }
            if (frame_shape.empty()) frame_shape = frame.shape();
            if (frame.shape() != frame_shape) {
                throw ValidationError("manifest row " + std::to_string(row_number) + ": image size " +
                                      shape_to_string(frame.shape()) + " differs from " + shape_to_string(frame_shape));
            }
            seq.frames.push_back(std::move(frame));
            seq.session_indices.push_back(session);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

namespace {

struct Fnv64 {
    std::uint64_t state = 0xcbf29ce484222325ULL;
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state ^= p[i];
            state *= 0x100000001b3ULL;
        }
    }
    void text(const std::string& s) {
        const std::uint64_t n = s.size();
        bytes(&n, sizeof n);
        bytes(s.data(), s.size());
    }
};

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

std::uint64_t hash_dataset_files(const std::filesystem::path& manifest_path) {
    Fnv64 h;
    h.text(slurp(manifest_path));
    for (const ManifestRow& row : read_manifest(manifest_path)) {
        h.text(slurp(manifest_path.parent_path() / row.path));
    }
    return h.state;
}

std::uint64_t hash_sequences(const std::vector<ImageSequence>& sequences) {
    Fnv64 h;
    for (const ImageSequence& seq : sequences) {
        h.text(seq.species);
        h.text(seq.plant_id);
        h.text(std::string(class_code(seq.label)));
        h.bytes(&seq.angle_index, sizeof seq.angle_index);
        for (std::size_t t = 0; t < seq.frames.size(); ++t) {
            h.bytes(&seq.session_indices[t], sizeof(int));
            h.bytes(seq.frames[t].data(), seq.frames[t].size() * sizeof(double));
        }
    }
    return h.state;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    static constexpr char digits[] = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[value & 0xf];
        value >>= 4;
    }
    buf[16] = '\0';
    return buf;
}

ImageSequence truncate_sessions(const ImageSequence& seq, int n) {
    if (n < 1 || n > kMaxSessions) {
        throw ValidationError("truncate_sessions: n=" + std::to_string(n) + " outside 1.." +
                              std::to_string(kMaxSessions));
    }
    ImageSequence out;
    out.label = seq.label;
    out.species = seq.species;
    out.plant_id = seq.plant_id;
    out.angle_index = seq.angle_index;
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        if (seq.session_indices[t] <= n) {
            out.frames.push_back(seq.frames[t]);
            out.session_indices.push_back(seq.session_indices[t]);
        }
    }
    return out;
}

std::vector<StressClass> labels_of(const std::vector<ImageSequence>& sequences) {
    std::vector<StressClass> labels;
    labels.reserve(sequences.size());
    for (const auto& s : sequences) labels.push_back(s.label);
    return labels;
}

}  // namespace phenoseq
