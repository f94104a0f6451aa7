// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/ecg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "heartdarts/binary_io.hpp"
#include "heartdarts/rng.hpp"
#include "heartdarts/wavelet.hpp"

namespace heartdarts {

namespace {

constexpr std::uint32_t kDatasetFormat = 1;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        lines.push_back(line);
    }
    return lines;
}

template <typename N>
N parse_number(std::string_view field, const std::string& path, std::size_t line_no, std::string_view what) {
    N v{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc() || ptr != end || field.empty())
        throw IngestionError(path + ":" + std::to_string(line_no) + ": bad " + std::string(what) + " \"" +
                             std::string(field) + "\"");
    return v;
}

}  // namespace

std::string_view class_name(AamiClass c) {
    static constexpr std::array<std::string_view, kNumAamiClasses> names = {"N", "S", "V", "F", "Q"};
    return names.at(static_cast<std::size_t>(c));
}

std::optional<AamiClass> aami_from_symbol(char symbol) {
    switch (symbol) {
        case 'L': case 'N': case 'R': case 'e': case 'j': return AamiClass::N;
        case 'A': case 'J': case 'S': case 'a': return AamiClass::S;
        case 'E': case 'V': return AamiClass::V;
        case 'F': return AamiClass::F;
        case 'P': case '/': case 'Q': case 'f': return AamiClass::Q;
        default: return std::nullopt;
    }
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::search_train: return "search_train";
        case Split::search_val: return "search_val";
        case Split::test: return "test";
    }
    return "?";
}

std::optional<Split> split_from_name(std::string_view name) {
    for (Split s : {Split::search_train, Split::search_val, Split::test})
        if (split_name(s) == name) return s;
    return std::nullopt;
}

DatabaseSpec database_spec(Database db) {
    switch (db) {
        case Database::mitbih: return {db, "mitbih", 360.0, 99, 200};
        case Database::incart: return {db, "incart", 257.0, 99, 150};
        case Database::qt: return {db, "qt", 250.0, 99, 120};
    }
    throw InputError("unknown database");
}

std::optional<Database> database_from_name(std::string_view name) {
    for (Database db : {Database::mitbih, Database::incart, Database::qt})
        if (database_spec(db).name == name) return db;
    return std::nullopt;
}

void EcgRecord::validate() const {
    if (!(fs > 0.0)) throw IngestionError(record_id + ": sampling rate must be positive");
    if (signals.size() != lead_names.size()) throw IngestionError(record_id + ": lead names do not match signals");
    for (const auto& s : signals)
        if (s.size() != length()) throw IngestionError(record_id + ": leads have different lengths");
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        if (annotations[i].sample >= length())
            throw IngestionError(record_id + ": annotation at sample " + std::to_string(annotations[i].sample) +
                                 " is beyond the signal length " + std::to_string(length()));
        if (i > 0 && annotations[i].sample <= annotations[i - 1].sample)
            throw IngestionError(record_id + ": annotation sample indices are not strictly increasing at sample " +
                                 std::to_string(annotations[i].sample));
    }
}

EcgRecord load_record_csv(const std::string& signal_path, const std::string& annotation_path, double fs,
                          std::span<const std::string> lead_selection, std::string record_id) {
    EcgRecord rec;
    rec.record_id = record_id.empty() ? signal_path : std::move(record_id);
    rec.fs = fs;

    const auto lines = read_lines(signal_path);
    if (lines.empty()) throw IngestionError(signal_path + ": empty signal file");
    const auto header = split_csv(lines.front());
    if (header.size() < 2 || header.front() != "sample_index")
        throw IngestionError(signal_path + ": header must be sample_index,<lead>[,<lead>...]");
    std::vector<std::size_t> columns;
    for (const auto& want : lead_selection) {
        const auto it = std::find(header.begin() + 1, header.end(), want);
        if (it == header.end()) {
            std::string available;
            for (auto h = header.begin() + 1; h != header.end(); ++h)
                available += (available.empty() ? "" : ", ") + std::string(*h);
            throw IngestionError(signal_path + ": lead " + want + " not found; available leads: " + available);
        }
        columns.push_back(static_cast<std::size_t>(it - header.begin()));
        rec.lead_names.push_back(want);
    }
    rec.signals.assign(columns.size(), {});
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split_csv(lines[i]);
        if (fields.size() != header.size())
            throw IngestionError(signal_path + ":" + std::to_string(i + 1) + ": expected " +
                                 std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
        const auto idx = parse_number<std::size_t>(fields[0], signal_path, i + 1, "sample_index");
        if (idx != i - 1)
            throw IngestionError(signal_path + ":" + std::to_string(i + 1) + ": sample_index " + std::to_string(idx) +
                                 " out of sequence");
        for (std::size_t c = 0; c < columns.size(); ++c)
            rec.signals[c].push_back(parse_number<double>(fields[columns[c]], signal_path, i + 1, "sample value"));
    }

    const auto ann_lines = read_lines(annotation_path);
    if (ann_lines.empty()) throw IngestionError(annotation_path + ": empty annotation file");
    const auto ann_header = split_csv(ann_lines.front());
    if (ann_header.size() != 2 || ann_header[0] != "sample_index" || ann_header[1] != "symbol")
        throw IngestionError(annotation_path + ": header must be sample_index,symbol");
    for (std::size_t i = 1; i < ann_lines.size(); ++i) {
        const auto fields = split_csv(ann_lines[i]);
        if (fields.size() != 2 || fields[1].size() != 1)
            throw IngestionError(annotation_path + ":" + std::to_string(i + 1) + ": expected sample_index,<one character>");
        rec.annotations.push_back(
            {parse_number<std::size_t>(fields[0], annotation_path, i + 1, "sample_index"), fields[1][0]});
    }
    rec.validate();
    return rec;
}

SegmentResult segment_heartbeats(const EcgRecord& rec, std::size_t pre, std::size_t post) {
    SegmentResult res;
    const std::size_t n = rec.length();
    const std::size_t leads = rec.signals.size();
    const std::size_t len = pre + 1 + post;
    for (const auto& a : rec.annotations) {
        const auto label = aami_from_symbol(a.symbol);
        if (!label) {
            ++res.skipped_unknown;
            continue;
        }
        if (a.sample < pre || a.sample + post >= n) {
            ++res.dropped_boundary;
            continue;
        }
        Heartbeat hb;
        hb.leads = leads;
        hb.label = *label;
        hb.record_id = rec.record_id;
        hb.r_peak = a.sample;
        hb.window.reserve(leads * len);
        for (const auto& sig : rec.signals) {
            const auto first = sig.begin() + static_cast<std::ptrdiff_t>(a.sample - pre);
            hb.window.insert(hb.window.end(), first, first + static_cast<std::ptrdiff_t>(len));
        }
        res.beats.push_back(std::move(hb));
    }
    return res;
}

Heartbeat normalize(Heartbeat beat) {
    const std::size_t len = beat.window_len();
    for (std::size_t l = 0; l < beat.leads; ++l) {
        double* w = beat.window.data() + l * len;
        double mean = 0.0;
        for (std::size_t i = 0; i < len; ++i) mean += w[i];
        mean /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t i = 0; i < len; ++i) var += (w[i] - mean) * (w[i] - mean);
        var /= static_cast<double>(len);
        const double sd = std::sqrt(var);
        // Relative floor: a lead whose spread is pure rounding noise is constant.
        if (!(sd > 1e-12 * std::max(1.0, std::fabs(mean)))) {
            std::fill(w, w + len, 0.0);
            continue;
        }
        for (std::size_t i = 0; i < len; ++i) w[i] = (w[i] - mean) / sd;
    }
    return beat;
}

void quantize_to_float(Heartbeat& beat) {
    for (double& v : beat.window) v = static_cast<double>(static_cast<float>(v));
}

std::vector<std::size_t> HeartbeatDataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < beats.size(); ++i)
        if (beats[i].split == s) out.push_back(i);
    return out;
}

std::size_t HeartbeatDataset::count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(beats.begin(), beats.end(), [s](const Heartbeat& b) { return b.split == s; }));
}

HeartbeatDataset split_dataset(std::vector<Heartbeat> beats, std::uint64_t seed) {
    if (beats.empty()) throw InputError("split_dataset: no beats");
    HeartbeatDataset ds;
    ds.leads = beats.front().leads;
    ds.window_len = beats.front().window_len();
    for (const auto& b : beats)
        if (b.leads != ds.leads || b.window_len() != ds.window_len)
            throw InputError("split_dataset: beats have inconsistent lead count or window length");

    std::stable_sort(beats.begin(), beats.end(), [](const Heartbeat& a, const Heartbeat& b) {
        if (a.record_id != b.record_id) return a.record_id < b.record_id;
        return a.r_peak < b.r_peak;
    });
    Rng rng(seed);
    for (std::size_t i = beats.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(beats[i - 1], beats[j]);
    }
    const std::size_t n = beats.size();
    const std::size_t n_train = n * 4 / 5;
    const std::size_t n_search_train = n_train * 4 / 5;
    for (std::size_t i = 0; i < n; ++i)
        beats[i].split = i < n_search_train ? Split::search_train : (i < n_train ? Split::search_val : Split::test);
    ds.beats = std::move(beats);
    return ds;
}

std::array<std::size_t, kNumAamiClasses> DatasetStats::class_totals() const {
    std::array<std::size_t, kNumAamiClasses> t{};
    for (const auto& row : counts)
        for (std::size_t c = 0; c < kNumAamiClasses; ++c) t[c] += row[c];
    return t;
}

std::size_t DatasetStats::total() const {
    std::size_t t = 0;
    for (auto v : class_totals()) t += v;
    return t;
}

std::string DatasetStats::report() const {
    std::ostringstream os;
    os << "split";
    for (AamiClass c : kAllAamiClasses) os << ',' << class_name(c);
    os << ",total\n";
    for (Split s : {Split::search_train, Split::search_val, Split::test}) {
        const auto& row = counts[static_cast<std::size_t>(s)];
        std::size_t t = 0;
        os << split_name(s);
        for (auto v : row) {
            os << ',' << v;
            t += v;
        }
        os << ',' << t << '\n';
    }
    os << "all";
    for (auto v : class_totals()) os << ',' << v;
    os << ',' << total() << '\n';
    return os.str();
}

DatasetStats dataset_stats(const HeartbeatDataset& ds) {
    DatasetStats st;
    for (const auto& b : ds.beats) ++st.counts[static_cast<std::size_t>(b.split)][static_cast<std::size_t>(b.label)];
    return st;
}

std::vector<std::uint8_t> encode_dataset(const HeartbeatDataset& ds) {
    if (ds.leads > 255) throw FormatError("dataset: too many leads for the format");
    ByteWriter w;
    w.magic("HDDS");
    w.put(kDatasetFormat);
    w.put(static_cast<std::uint8_t>(ds.leads));
    w.put(static_cast<std::uint32_t>(ds.window_len));
    w.put(static_cast<std::uint64_t>(ds.beats.size()));
    for (const auto& b : ds.beats) {
        if (b.window.size() != ds.leads * ds.window_len)
            throw FormatError("dataset: beat " + b.record_id + "@" + std::to_string(b.r_peak) + " has the wrong size");
        w.put(static_cast<std::uint8_t>(b.label));
        w.put(static_cast<std::uint8_t>(b.split));
        w.put_string(b.record_id);
        w.put(b.r_peak);
        for (double v : b.window) w.put_f32(static_cast<float>(v));
    }
    return std::move(w).take();
}

HeartbeatDataset decode_dataset(std::span<const std::uint8_t> bytes) {
    ByteReader<FormatError> r(bytes);
    r.expect_magic("HDDS");
    const auto format = r.get<std::uint32_t>("format");
    if (format != kDatasetFormat) throw FormatError("dataset: unsupported format " + std::to_string(format));
    HeartbeatDataset ds;
    ds.leads = r.get<std::uint8_t>("leads");
    ds.window_len = r.get<std::uint32_t>("window_len");
    const auto count = r.get<std::uint64_t>("beat count");
    for (std::uint64_t i = 0; i < count; ++i) {
        Heartbeat b;
        b.leads = ds.leads;
        const auto label = r.get<std::uint8_t>("label");
        const auto split = r.get<std::uint8_t>("split");
        if (label >= kNumAamiClasses) throw FormatError("dataset: invalid label " + std::to_string(label));
        if (split > 2) throw FormatError("dataset: invalid split " + std::to_string(split));
        b.label = static_cast<AamiClass>(label);
        b.split = static_cast<Split>(split);
        b.record_id = r.get_string("record id");
        b.r_peak = r.get<std::uint64_t>("r_peak");
        b.window.resize(ds.leads * ds.window_len);
        for (double& v : b.window) v = r.get_f32();
        ds.beats.push_back(std::move(b));
    }
    r.expect_end();
    return ds;
}

void save_dataset(const std::string& path, const HeartbeatDataset& ds) { write_file_bytes(path, encode_dataset(ds)); }

HeartbeatDataset load_dataset(const std::string& path) { return decode_dataset(read_file_bytes(path)); }

std::vector<Heartbeat> preprocess_record(const EcgRecord& rec, const DatabaseSpec& spec, PreprocessSummary* summary) {
    EcgRecord clean = rec;
    for (auto& sig : clean.signals) sig = wavelet_denoise(sig, rec.fs);
    auto seg = segment_heartbeats(clean, spec.pre, spec.post);
    for (auto& b : seg.beats) {
        b = normalize(std::move(b));
        quantize_to_float(b);
    }
    if (summary) {
        ++summary->records;
        summary->beats += seg.beats.size();
        summary->dropped_boundary += seg.dropped_boundary;
        summary->skipped_unknown += seg.skipped_unknown;
    }
    return std::move(seg.beats);
}

template <typename T>
Batch<T> make_batch(const HeartbeatDataset& ds, std::span<const std::size_t> indices) {
    Batch<T> batch;
    batch.x = make_tensor<T>({indices.size(), ds.leads, ds.window_len});
    auto* dst = batch.x->values.data();
    for (std::size_t idx : indices) {
        const auto& b = ds.beats.at(idx);
        for (double v : b.window) *dst++ = static_cast<T>(v);
        batch.labels.push_back(static_cast<int>(b.label));
    }
    return batch;
}

template Batch<float> make_batch(const HeartbeatDataset&, std::span<const std::size_t>);
template Batch<double> make_batch(const HeartbeatDataset&, std::span<const std::size_t>);

}  // namespace heartdarts
