#include "kppo/error.hpp"
#include "kppo/knowledge_tree.hpp"
#include "kppo/util.hpp"

#include <optional>

namespace kppo {
namespace {

struct Heading {
    int level;
    std::string title;
};

std::optional<Heading> match_heading(const std::string& line) {
    int level = 0;
    while (level < static_cast<int>(line.size()) && line[level] == '#') ++level;
    if (level < 1 || level > max_heading_level) return std::nullopt;
    if (static_cast<int>(line.size()) <= level || line[level] != ' ') return std::nullopt;
    auto title = trim(std::string_view(line).substr(level + 1));
    if (title.empty()) return std::nullopt;
    return Heading{level, std::move(title)};
}

std::optional<std::string> match_bullet(const std::string& line) {
    if (line.size() < 2 || line[0] != '-' || line[1] != ' ') return std::nullopt;
    auto text = trim(std::string_view(line).substr(2));
    if (text.empty()) return std::nullopt;
    return text;
}

bool is_blank(const std::string& line) { return trim(line).empty(); }

// Groups lines into blank-separated blocks.
std::vector<std::string> to_blocks(const std::vector<std::string>& lines) {
    std::vector<std::string> blocks;
    std::string cur;
    for (const auto& l : lines) {
        if (is_blank(l)) {
            if (!cur.empty()) blocks.push_back(std::move(cur));
            cur.clear();
            continue;
        }
        if (!cur.empty()) cur += '\n';
        cur += l;
    }
    if (!cur.empty()) blocks.push_back(std::move(cur));
    return blocks;
}

std::string single_line(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (c == '\n' || c == '\r') {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty() && out.back() != ' ') out += ' ';
        pending_space = false;
        out += c;
    }
    return trim(out);
}

void render_topic(const KnowledgeTree& tree, NodeId id, std::string& out) {
    const auto& n = tree.node(id);
    if (id != tree.root()) {
        if (n.depth > max_heading_level) {
            throw StructureError("topic '" + tree.path(id) + "' at depth " + std::to_string(n.depth) +
                                 " exceeds heading level " + std::to_string(max_heading_level));
        }
        out.append(static_cast<std::size_t>(n.depth), '#');
        out += ' ';
        out += single_line(n.text);
        out += '\n';
    }
    bool first_topic = true;
    for (auto c : n.children) {
        const auto& child = tree.node(c);
        if (child.kind == NodeKind::note) {
            out += "- ";
            out += single_line(child.text);
            out += '\n';
            continue;
        }
        if (!first_topic) out += '\n';
        first_topic = false;
        render_topic(tree, c, out);
    }
}

std::string render_blocks(const std::vector<std::string>& blocks) {
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) out += '\n';
        out += blocks[i];
        out += '\n';
    }
    return out;
}

} // namespace

PromptDocument parse_prompt(std::string_view text) {
    PromptDocument doc;
    auto& tree = doc.tree;
    std::vector<NodeId> open{tree.root()};
    std::vector<std::string> pending;
    bool seen_element = false;

    auto flush_pending = [&] {
        if (!seen_element) {
            auto blocks = to_blocks(pending);
            doc.preamble.insert(doc.preamble.end(), blocks.begin(), blocks.end());
        } else {
            for (const auto& l : pending) {
                if (!is_blank(l)) tree.add_note(open.back(), trim(l));
            }
        }
        pending.clear();
    };

    for (auto& line : split_lines(text)) {
        if (auto h = match_heading(line)) {
            flush_pending();
            while (open.size() > 1 && tree.node(open.back()).depth >= h->level) open.pop_back();
            open.push_back(tree.add_topic(open.back(), std::move(h->title)));
            seen_element = true;
        } else if (auto b = match_bullet(line)) {
            flush_pending();
            tree.add_note(open.back(), std::move(*b));
            seen_element = true;
        } else {
            pending.push_back(std::move(line));
        }
    }
    auto tail = to_blocks(pending);
    auto& dest = seen_element ? doc.epilogue : doc.preamble;
    dest.insert(dest.end(), tail.begin(), tail.end());
    return doc;
}

std::string render_prompt(const PromptDocument& doc) {
    std::vector<std::string> sections;
    if (!doc.preamble.empty()) sections.push_back(render_blocks(doc.preamble));
    if (!doc.tree.empty()) {
        std::string tree_text;
        render_topic(doc.tree, doc.tree.root(), tree_text);
        sections.push_back(std::move(tree_text));
    }
    if (!doc.epilogue.empty()) sections.push_back(render_blocks(doc.epilogue));
    std::string out;
    for (std::size_t i = 0; i < sections.size(); ++i) {
        if (i) out += '\n';
        out += sections[i];
    }
    return out;
}

} // namespace kppo
