#include "tdabias/attn_store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <fmt/format.h>
#include <json.hpp>

namespace tdabias {

namespace {

using nlohmann::json;

constexpr std::string_view kManifestVersion = "attdump-1";

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DumpError(fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename T>
T required(const json& obj, const char* field, const std::string& where) {
    auto it = obj.find(field);
    if (it == obj.end()) throw DumpError(fmt::format("{}: missing field '{}'", where, field));
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw DumpError(fmt::format("{}: field '{}' has the wrong type", where, field));
    }
}

float decode_le_float(const unsigned char* p) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, p, sizeof bits);
    if constexpr (std::endian::native == std::endian::big) {
        bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
    }
    return std::bit_cast<float>(bits);
}

std::string describe(const ManifestEntry& e) {
    return fmt::format("record (example_id={}, condition={})", e.example_id, to_string(e.condition));
}

}  // namespace

std::string_view to_string(Category c) {
    switch (c) {
        case Category::gender: return "gender";
        case Category::profession: return "profession";
        case Category::race: return "race";
        case Category::religion: return "religion";
    }
    return "?";
}

std::string_view to_string(Condition c) {
    switch (c) {
        case Condition::stereotype: return "stereotype";
        case Condition::anti_stereotype: return "anti-stereotype";
        case Condition::irrelevant: return "irrelevant";
    }
    return "?";
}

std::optional<Category> parse_category(std::string_view s) {
    for (auto c : kCategories)
        if (to_string(c) == s) return c;
    return std::nullopt;
}

std::optional<Condition> parse_condition(std::string_view s) {
    for (auto c : {Condition::stereotype, Condition::anti_stereotype, Condition::irrelevant})
        if (to_string(c) == s) return c;
    return std::nullopt;
}

std::uint64_t ManifestEntry::payload_bytes() const {
    auto s = static_cast<std::uint64_t>(seq_len);
    return static_cast<std::uint64_t>(layer_count) * static_cast<std::uint64_t>(head_count) * s * s * 4u;
}

Manifest read_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw DumpError(fmt::format("{}: malformed manifest: {}", path.string(), e.what()));
    }
    if (!doc.is_object()) throw DumpError(fmt::format("{}: manifest must be an object", path.string()));

    const std::string where = path.string();
    if (required<std::string>(doc, "version", where) != kManifestVersion)
        throw DumpError(fmt::format("{}: unsupported version (expected {})", where, kManifestVersion));

    Manifest m;
    m.directory = path.parent_path();
    m.model = doc.value("model", std::string{});
    m.layer_count = required<int>(doc, "layer_count", where);
    m.head_count = required<int>(doc, "head_count", where);
    if (m.layer_count <= 0 || m.head_count <= 0)
        throw DumpError(fmt::format("{}: layer_count and head_count must be positive", where));

    const auto& records = doc.find("records");
    if (records == doc.end() || !records->is_array())
        throw DumpError(fmt::format("{}: 'records' must be an array", where));

    std::set<std::pair<std::string, Condition>> seen;
    for (std::size_t r = 0; r < records->size(); ++r) {
        const json& rec = (*records)[r];
        const std::string rwhere = fmt::format("{}: records[{}]", where, r);
        if (!rec.is_object()) throw DumpError(rwhere + ": not an object");

        ManifestEntry e;
        e.example_id = required<std::string>(rec, "example_id", rwhere);
        const std::string rid = fmt::format("{}: record example_id={}", where, e.example_id);

        auto cat = parse_category(required<std::string>(rec, "category", rid));
        if (!cat) throw DumpError(rid + ": unknown category");
        e.category = *cat;
        e.group = required<std::string>(rec, "group", rid);
        auto cond = parse_condition(required<std::string>(rec, "condition", rid));
        if (!cond) throw DumpError(rid + ": unknown condition");
        e.condition = *cond;

        e.seq_len = required<int>(rec, "seq_len", rid);
        if (e.seq_len <= 0) throw DumpError(rid + ": seq_len must be positive");
        e.blob_path = required<std::string>(rec, "blob", rid);
        auto offset = required<std::int64_t>(rec, "offset", rid);
        if (offset < 0) throw DumpError(rid + ": offset must be non-negative");
        e.byte_offset = static_cast<std::uint64_t>(offset);

        e.layer_count = rec.contains("layer_count") ? required<int>(rec, "layer_count", rid) : m.layer_count;
        e.head_count = rec.contains("head_count") ? required<int>(rec, "head_count", rid) : m.head_count;
        if (e.layer_count != m.layer_count || e.head_count != m.head_count)
            throw DumpError(rid + ": layer/head counts differ from the dump's");

        if (!seen.emplace(e.example_id, e.condition).second)
            throw DumpError(fmt::format("{}: duplicate condition {}", rid, to_string(e.condition)));
        m.entries.push_back(std::move(e));
    }

    std::map<std::string, std::array<std::optional<std::size_t>, 3>> by_example;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        auto& slots = by_example[e.example_id];
        for (const auto& other : slots) {
            if (!other) continue;
            const auto& o = m.entries[*other];
            if (o.category != e.category || o.group != e.group)
                throw DumpError(fmt::format("{}: example_id={} mixes categories or groups", where, e.example_id));
        }
        slots[static_cast<std::size_t>(e.condition)] = i;
    }

    for (const auto& [id, slots] : by_example) {
        if (!slots[0] || !slots[1] || !slots[2]) {
            if (options.require_complete_triples)
                throw DumpError(fmt::format("{}: example_id={} is missing a condition", where, id));
            m.incomplete_examples.push_back(id);
            continue;
        }
        ExampleTriple t;
        t.example_id = id;
        t.category = m.entries[*slots[0]].category;
        t.group = m.entries[*slots[0]].group;
        t.entry = {*slots[0], *slots[1], *slots[2]};
        m.triples.push_back(std::move(t));
    }
    return m;
}

AttentionMatrix::AttentionMatrix(int size, std::vector<float> values) : size_(size), values_(std::move(values)) {
    if (size < 0 || values_.size() != static_cast<std::size_t>(size) * static_cast<std::size_t>(size))
        throw std::invalid_argument("attention matrix must be square");
}

WeightedGraph::WeightedGraph(int node_count, std::vector<double> weights)
    : node_count_(node_count), weights_(std::move(weights)) {
    if (node_count < 2) throw std::invalid_argument("graph needs at least 2 nodes");
    const auto n = static_cast<std::size_t>(node_count);
    if (weights_.size() != n * (n - 1) / 2)
        throw std::invalid_argument(fmt::format("graph with {} nodes needs {} weights, got {}", node_count,
                                                n * (n - 1) / 2, weights_.size()));
    for (double w : weights_)
        if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("graph weights must be finite and >= 0");
}

std::size_t WeightedGraph::edge_index(int node_count, int i, int j) {
    if (i > j) std::swap(i, j);
    const auto n = static_cast<std::size_t>(node_count);
    const auto a = static_cast<std::size_t>(i);
    return a * n - a * (a + 1) / 2 + static_cast<std::size_t>(j - i - 1);
}

double WeightedGraph::weight(int i, int j) const {
    if (i == j || i < 0 || j < 0 || i >= node_count_ || j >= node_count_)
        throw std::out_of_range("edge index out of range");
    return weights_[edge_index(node_count_, i, j)];
}

struct AttentionStore::MappedBlob {
    const unsigned char* data = nullptr;
    std::size_t size = 0;
    std::filesystem::path path;

    explicit MappedBlob(const std::filesystem::path& p) : path(p) {
        int fd = ::open(p.c_str(), O_RDONLY);
        if (fd < 0) throw DumpError(fmt::format("cannot open blob {}", p.string()));
        struct stat st {};
        if (::fstat(fd, &st) != 0) {
            ::close(fd);
            throw DumpError(fmt::format("cannot stat blob {}", p.string()));
        }
        size = static_cast<std::size_t>(st.st_size);
        if (size > 0) {
            void* addr = ::mmap(nullptr, size, PROT_READ, MAP_PRIVATE, fd, 0);
            if (addr == MAP_FAILED) {
                ::close(fd);
                throw DumpError(fmt::format("cannot map blob {}", p.string()));
            }
            data = static_cast<const unsigned char*>(addr);
        }
        ::close(fd);
    }
    ~MappedBlob() {
        if (data) ::munmap(const_cast<unsigned char*>(data), size);
    }
    MappedBlob(const MappedBlob&) = delete;
    MappedBlob& operator=(const MappedBlob&) = delete;
};

AttentionStore::AttentionStore(Manifest manifest, RowSumPolicy policy)
    : manifest_(std::move(manifest)), policy_(policy),
      row_sum_warnings_(std::make_unique<std::atomic<std::uint64_t>>(0)) {
    for (const auto& e : manifest_.entries) {
        auto it = blobs_.find(e.blob_path);
        if (it == blobs_.end())
            it = blobs_.emplace(e.blob_path, std::make_unique<MappedBlob>(manifest_.directory / e.blob_path)).first;
        const auto& blob = *it->second;
        if (e.byte_offset > blob.size || blob.size - e.byte_offset < e.payload_bytes())
            throw DumpError(fmt::format("{}: short read, blob {} has {} bytes, record needs {} at offset {}",
                                        describe(e), e.blob_path, blob.size, e.payload_bytes(), e.byte_offset));
    }
}

AttentionStore::~AttentionStore() = default;
AttentionStore::AttentionStore(AttentionStore&&) noexcept = default;
AttentionStore& AttentionStore::operator=(AttentionStore&&) noexcept = default;

AttentionRecord AttentionStore::load_matrix(const ManifestEntry& entry, int layer, int head) const {
    if (layer < 0 || layer >= entry.layer_count)
        throw std::out_of_range(fmt::format("{}: layer {} out of range [0, {})", describe(entry), layer,
                                            entry.layer_count));
    if (head < 0 || head >= entry.head_count)
        throw std::out_of_range(fmt::format("{}: head {} out of range [0, {})", describe(entry), head,
                                            entry.head_count));
    auto it = blobs_.find(entry.blob_path);
    if (it == blobs_.end()) throw DumpError(fmt::format("{}: blob {} is not part of this dump", describe(entry),
                                                        entry.blob_path));

    const auto seq = static_cast<std::size_t>(entry.seq_len);
    const std::size_t cells = seq * seq;
    const std::uint64_t start =
        entry.byte_offset + (static_cast<std::uint64_t>(layer) * entry.head_count + head) * cells * 4u;
    const auto& blob = *it->second;
    if (start + cells * 4u > blob.size)
        throw DumpError(fmt::format("{}: short read in blob {}", describe(entry), entry.blob_path));

    std::vector<float> values(cells);
    const unsigned char* p = blob.data + start;
    for (std::size_t c = 0; c < cells; ++c) {
        values[c] = decode_le_float(p + 4 * c);
        if (!std::isfinite(values[c]))
            throw DumpError(fmt::format("{}: non-finite value at layer {}, head {}, row {}, col {}",
                                        describe(entry), layer, head, c / seq, c % seq));
    }

    double worst = 0.0;
    for (std::size_t r = 0; r < seq; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < seq; ++c) sum += values[r * seq + c];
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    if (worst > kRowSumTolerance) {
        if (policy_ == RowSumPolicy::fail)
            throw DumpError(fmt::format("{}: layer {}, head {}: attention row sum off by {:.3g}", describe(entry),
                                        layer, head, worst));
        row_sum_warnings_->fetch_add(1, std::memory_order_relaxed);
    }

    AttentionRecord rec;
    rec.entry = entry;
    rec.layer = layer;
    rec.head = head;
    rec.matrix = AttentionMatrix(entry.seq_len, std::move(values));
    rec.max_row_sum_error = worst;
    return rec;
}

std::string AttentionStore::fingerprint() const {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 unavailable");

    const std::string manifest_bytes = read_file(manifest_.directory / "manifest.json");
    EVP_DigestUpdate(ctx.get(), manifest_bytes.data(), manifest_bytes.size());
    for (const auto& [path, blob] : blobs_)  // std::map iterates in path order
        if (blob->size > 0) EVP_DigestUpdate(ctx.get(), blob->data, blob->size);

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return "sha256:" + hex;
}

WeightedGraph symmetrize(const AttentionMatrix& matrix) {
    const int n = matrix.size();
    if (n < 2) throw std::invalid_argument(fmt::format("cannot build a graph from a {}x{} matrix", n, n));
    std::vector<double> weights;
    weights.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            weights.push_back((static_cast<double>(matrix(i, j)) + static_cast<double>(matrix(j, i))) / 2.0);
    return WeightedGraph(n, std::move(weights));
}

WeightedGraph symmetrize(const AttentionRecord& record) {
    try {
        return symmetrize(record.matrix);
    } catch (const std::invalid_argument& e) {
        throw DumpError(fmt::format("{}: {}", describe(record.entry), e.what()));
    }
}

std::map<ClusterKey, ClusterGraphs> build_clusters(const AttentionStore& store,
                                                   std::span<const ExampleTriple> triples,
                                                   int layer, int head, int min_cluster_size) {
    std::vector<const ExampleTriple*> ordered;
    ordered.reserve(triples.size());
    for (const auto& t : triples) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(),
              [](const ExampleTriple* a, const ExampleTriple* b) { return a->example_id < b->example_id; });

    const auto& entries = store.manifest().entries;
    auto load = [&](const ExampleTriple& t, Condition c) {
        return symmetrize(store.load_matrix(entries[t.at(c)], layer, head));
    };

    std::map<ClusterKey, ClusterGraphs> clusters;
    for (const ExampleTriple* t : ordered) {
        auto& cl = clusters[ClusterKey{t->category, t->group, layer, head}];
        cl.example_ids.push_back(t->example_id);
        cl.stereotype.push_back(load(*t, Condition::stereotype));
        cl.anti_stereotype.push_back(load(*t, Condition::anti_stereotype));
        cl.irrelevant.push_back(load(*t, Condition::irrelevant));
    }
    for (auto& [key, cl] : clusters) cl.skipped = static_cast<int>(cl.size()) < min_cluster_size;
    return clusters;
}

}  // namespace tdabias
