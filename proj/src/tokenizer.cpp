#include "devserve/tokenizer.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace devserve {

// ---- byte classification ---------------------------------------------------

const std::array<std::uint8_t, 256> kByteClassTable = [] {
    std::array<std::uint8_t, 256> t{};
    for (int b = 0; b < 256; ++b) {
        std::uint8_t c;
        if (b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\v' || b == '\f') {
            c = static_cast<std::uint8_t>(ByteClass::ws);
        } else if ((b >= 'A' && b <= 'Z') || (b >= 'a' && b <= 'z') || b >= 0x80) {
            c = static_cast<std::uint8_t>(ByteClass::alpha);
        } else if (b >= '0' && b <= '9') {
            c = static_cast<std::uint8_t>(ByteClass::digit);
        } else {
            c = static_cast<std::uint8_t>(ByteClass::other);
        }
        t[static_cast<std::size_t>(b)] = c;
    }
    return t;
}();

void pretokenize_scalar(std::string_view text, std::vector<Piece>& out) {
    out.clear();
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        const auto b = static_cast<std::uint8_t>(text[i]);
        std::size_t j = i + 1;
        if (b == ' ' && j < n && byte_class(static_cast<std::uint8_t>(text[j])) != ByteClass::ws) {
            // A lone space glues onto the run it introduces.
            ByteClass c2 = byte_class(static_cast<std::uint8_t>(text[j]));
            while (j < n && byte_class(static_cast<std::uint8_t>(text[j])) == c2) ++j;
        } else {
            ByteClass c = byte_class(b);
            while (j < n && byte_class(static_cast<std::uint8_t>(text[j])) == c) ++j;
        }
        out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j - i)});
        i = j;
    }
}

void pretokenize_wide(std::string_view text, std::vector<std::uint8_t>& class_buf,
                      std::vector<Piece>& out) {
    out.clear();
    const std::size_t n = text.size();
    class_buf.resize(n);
    // Classify in 16-byte blocks; the fixed-trip inner loop over a flat table
    // is the part a vectorizer can widen.
    std::size_t p = 0;
    for (; p + 16 <= n; p += 16) {
        for (std::size_t k = 0; k < 16; ++k)
            class_buf[p + k] = kByteClassTable[static_cast<std::uint8_t>(text[p + k])];
    }
    for (; p < n; ++p) class_buf[p] = kByteClassTable[static_cast<std::uint8_t>(text[p])];

    constexpr auto ws = static_cast<std::uint8_t>(ByteClass::ws);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        if (static_cast<std::uint8_t>(text[i]) == ' ' && j < n && class_buf[j] != ws) {
            std::uint8_t c2 = class_buf[j];
            while (j < n && class_buf[j] == c2) ++j;
        } else {
            std::uint8_t c = class_buf[i];
            while (j < n && class_buf[j] == c) ++j;
        }
        out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j - i)});
        i = j;
    }
}

// ---- merge table -----------------------------------------------------------

MergeTable::MergeTable(std::size_t expected) {
    std::size_t buckets = 2;
    while (buckets * kEntriesPerBucket * 7 < expected * 10) buckets <<= 1;
    rehash(buckets);
}

void MergeTable::rehash(std::size_t bucket_count) {
    std::vector<Bucket> old = std::move(buckets_);
    buckets_.assign(bucket_count, Bucket{});
    for (auto& b : buckets_)
        for (auto& e : b.e) e.left = kEmpty;
    count_ = 0;
    for (const auto& b : old)
        for (const auto& e : b.e)
            if (e.left != kEmpty) insert(e.left, e.right, e.merged, e.rank);
}

void MergeTable::insert(std::uint32_t left, std::uint32_t right, std::uint32_t merged,
                        std::uint32_t rank) {
    if (find(left, right)) raise(Errc::duplicate_merge, "merge rule already present");
    std::size_t slots = buckets_.size() * kEntriesPerBucket;
    if ((count_ + 1) * 10 > slots * 7) {
        rehash(buckets_.size() * 2);
        slots = buckets_.size() * kEntriesPerBucket;
    }
    std::uint64_t h = hash_pair(left, right);
    std::size_t bucket = (h >> 32) & (buckets_.size() - 1);
    std::size_t e = bucket * kEntriesPerBucket;
    for (std::size_t probe = 0; probe < slots; ++probe) {
        MergeEntry& slot = buckets_[e >> 2].e[e & 3];
        if (slot.left == kEmpty) {
            slot = {left, right, merged, rank};
            ++count_;
            return;
        }
        e = (e + 1) % slots;
    }
    raise(Errc::capacity_exceeded, "merge table full");  // unreachable: load kept under 0.7
}

const MergeEntry* MergeTable::find(std::uint32_t left, std::uint32_t right) const {
    if (count_ == 0) return nullptr;
    const std::size_t slots = buckets_.size() * kEntriesPerBucket;
    std::uint64_t h = hash_pair(left, right);
    std::size_t e = ((h >> 32) & (buckets_.size() - 1)) * kEntriesPerBucket;
    for (std::size_t probe = 0; probe < slots; ++probe) {
        const MergeEntry& slot = buckets_[e >> 2].e[e & 3];
        if (slot.left == kEmpty) return nullptr;
        if (slot.left == left && slot.right == right) return &slot;
        e = (e + 1) % slots;
    }
    return nullptr;
}

// ---- scratch ---------------------------------------------------------------

void EncodeScratch::reserve(std::size_t max_text_bytes) {
    nodes.reserve(max_text_bytes);
    pieces.reserve(max_text_bytes / 2 + 1);
    classes.reserve(max_text_bytes);
}

// ---- file format helpers ---------------------------------------------------

std::string escape_token(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (char ch : raw) {
        auto b = static_cast<std::uint8_t>(ch);
        if (b < 0x21 || b > 0x7E || b == '\\') {
            char buf[5];
            std::snprintf(buf, sizeof(buf), "\\x%02x", b);
            out += buf;
        } else {
            out += ch;
        }
    }
    return out;
}

namespace {

[[noreturn]] void parse_fail(const char* what, std::size_t line_no) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s (line %zu)", what, line_no);
    raise(Errc::parse_error, buf);
}

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

std::string unescape_token(std::string_view escaped, std::size_t line_no) {
    std::string out;
    out.reserve(escaped.size());
    for (std::size_t i = 0; i < escaped.size();) {
        char c = escaped[i];
        if (c == '\\') {
            if (i + 3 >= escaped.size() || escaped[i + 1] != 'x') {
                parse_fail("malformed escape; expected \\xNN", line_no);
            }
            int hi = hex_digit(escaped[i + 2]);
            int lo = hex_digit(escaped[i + 3]);
            if (hi < 0 || lo < 0) parse_fail("bad hex digits in \\xNN escape", line_no);
            out += static_cast<char>(hi * 16 + lo);
            i += 4;
        } else {
            out += c;
            ++i;
        }
    }
    return out;
}

// ---- tokenizer -------------------------------------------------------------

namespace {

// Walks `text` line by line, invoking fn(line, line_no) for nonempty lines.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) fn(line, line_no);
        if (end == text.size()) break;
        pos = end + 1;
    }
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::parse_error, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Tokenizer Tokenizer::from_text(std::string_view vocab_text, std::string_view merges_text) {
    Tokenizer tok;
    std::unordered_map<std::string, TokenId> by_string;

    for_each_line(vocab_text, [&](std::string_view line, std::size_t line_no) {
        std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos) parse_fail("vocab line missing tab separator", line_no);
        std::string token = unescape_token(line.substr(0, tab), line_no);
        if (token.empty()) parse_fail("empty token string", line_no);
        std::string_view id_part = line.substr(tab + 1);
        char* end = nullptr;
        std::string id_str(id_part);
        unsigned long id = std::strtoul(id_str.c_str(), &end, 10);
        if (id_str.empty() || *end != '\0' || id > 0xFFFFFFFFull)
            parse_fail("bad token id", line_no);
        auto tid = static_cast<TokenId>(id);
        if (tid < tok.vocab_.size() && tok.present_[tid]) parse_fail("duplicate token id", line_no);
        if (!by_string.emplace(token, tid).second) parse_fail("duplicate token string", line_no);
        if (tid >= tok.vocab_.size()) {
            tok.vocab_.resize(tid + 1);
            tok.present_.resize(tid + 1, 0);
        }
        tok.vocab_[tid] = std::move(token);
        tok.present_[tid] = 1;
    });

    for (int b = 0; b < 256; ++b) {
        auto it = by_string.find(std::string(1, static_cast<char>(b)));
        if (it == by_string.end())
            raise(Errc::parse_error, "byte-level base vocabulary incomplete");
        tok.byte_token_[static_cast<std::size_t>(b)] = it->second;
    }

    std::uint32_t rank = 0;
    for_each_line(merges_text, [&](std::string_view line, std::size_t line_no) {
        std::size_t sp = line.find(' ');
        if (sp == std::string_view::npos || line.find(' ', sp + 1) != std::string_view::npos)
            parse_fail("merge line must be exactly two fields", line_no);
        std::string left = unescape_token(line.substr(0, sp), line_no);
        std::string right = unescape_token(line.substr(sp + 1), line_no);
        auto li = by_string.find(left);
        auto ri = by_string.find(right);
        if (li == by_string.end() || ri == by_string.end())
            parse_fail("merge references a token not in the vocab", line_no);
        auto mi = by_string.find(left + right);
        if (mi == by_string.end()) parse_fail("merge result not in the vocab", line_no);
        if (tok.merges_.find(li->second, ri->second)) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "duplicate merge rule (line %zu)", line_no);
            raise(Errc::duplicate_merge, buf);
        }
        tok.merges_.insert(li->second, ri->second, mi->second, rank++);
    });
    return tok;
}

Tokenizer Tokenizer::load(const std::string& vocab_path, const std::string& merges_path) {
    return from_text(slurp(vocab_path), slurp(merges_path));
}

Tokenizer Tokenizer::byte_level() {
    Tokenizer tok;
    tok.vocab_.resize(256);
    tok.present_.assign(256, 1);
    for (int b = 0; b < 256; ++b) {
        tok.vocab_[static_cast<std::size_t>(b)] = std::string(1, static_cast<char>(b));
        tok.byte_token_[static_cast<std::size_t>(b)] = static_cast<TokenId>(b);
    }
    return tok;
}

const std::string& Tokenizer::token_bytes(TokenId id) const {
    if (!has_token(id)) raise(Errc::invalid_token_id, "token id not in vocab");
    return vocab_[id];
}

void Tokenizer::encode_piece(std::string_view piece, EncodeScratch& scratch,
                             std::vector<TokenId>& out) const {
    if (piece.empty()) return;
    auto& nodes = scratch.nodes;
    nodes.clear();
    const auto n = static_cast<std::uint32_t>(piece.size());
    for (std::uint32_t i = 0; i < n; ++i) {
        SymbolNode node;
        node.token = byte_token_[static_cast<std::uint8_t>(piece[i])];
        node.prev = i == 0 ? kNodeNone : i - 1;
        node.next = i + 1 < n ? i + 1 : kNodeNone;
        node.length = 1;
        nodes.push_back(node);
    }
    if (merges_.size() != 0) {
        for (;;) {
            // Greedy pass: lowest rank wins, leftmost on ties (strict <).
            std::uint32_t best = kNodeNone;
            std::uint32_t best_rank = 0xFFFFFFFFu;
            const MergeEntry* best_rule = nullptr;
            for (std::uint32_t i = 0; nodes[i].next != kNodeNone; i = nodes[i].next) {
                const MergeEntry* m = merges_.find(nodes[i].token, nodes[nodes[i].next].token);
                if (m && m->rank < best_rank) {
                    best_rank = m->rank;
                    best = i;
                    best_rule = m;
                }
            }
            if (best == kNodeNone) break;
            std::uint32_t right = nodes[best].next;
            nodes[best].token = best_rule->merged;
            nodes[best].length += nodes[right].length;
            nodes[best].next = nodes[right].next;
            if (nodes[right].next != kNodeNone) nodes[nodes[right].next].prev = best;
        }
    }
    for (std::uint32_t i = 0; i != kNodeNone; i = nodes[i].next) out.push_back(nodes[i].token);
}

void Tokenizer::encode(std::string_view text, EncodeScratch& scratch,
                       std::vector<TokenId>& out) const {
    out.clear();
    if (use_wide_) {
        pretokenize_wide(text, scratch.classes, scratch.pieces);
    } else {
        pretokenize_scalar(text, scratch.pieces);
    }
    for (const Piece& p : scratch.pieces)
        encode_piece(text.substr(p.offset, p.length), scratch, out);
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
    EncodeScratch scratch;
    scratch.reserve(text.size());
    std::vector<TokenId> out;
    encode(text, scratch, out);
    return out;
}

void Tokenizer::decode(std::span<const TokenId> ids, std::string& out) const {
    for (TokenId id : ids) out += token_bytes(id);
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    decode(ids, out);
    return out;
}

}  // namespace devserve
