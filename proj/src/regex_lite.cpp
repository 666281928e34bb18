#include "canontab/regex_lite.hpp"

#include <algorithm>
#include <array>
#include <cstring>

#include "canontab/errors.hpp"

namespace canontab::rx {

namespace {

// ---------------------------------------------------------------------------
// AST

struct ByteClass {
    bool negated = false;
    std::vector<std::pair<unsigned char, unsigned char>> ranges;

    void add(unsigned char lo, unsigned char hi) { ranges.emplace_back(lo, hi); }

    bool contains(unsigned char c) const {
        bool in = false;
        for (const auto& [lo, hi] : ranges) {
            if (c >= lo && c <= hi) {
                in = true;
                break;
            }
        }
        return negated ? !in : in;
    }

    // True when every byte in [lo, hi] is admitted.
    bool covers_range(unsigned char lo, unsigned char hi) const {
        for (unsigned c = lo; c <= hi; ++c) {
            if (!contains(static_cast<unsigned char>(c))) return false;
        }
        return true;
    }
};

struct Node;
using NodePtr = std::unique_ptr<Node>;

struct Node {
    enum Kind { Literal, AnyChar, CharCls, Seq, Alt, Rep, Group, AnchorBegin, AnchorEnd };
    Kind kind;
    unsigned char lit = 0;          // Literal
    ByteClass cls;                  // CharCls
    std::vector<NodePtr> kids;      // Seq, Alt; single child for Rep, Group
    int rep_min = 0, rep_max = -1;  // Rep (-1 = unbounded)
    bool greedy = true;             // Rep
    int group_index = -1;           // Group (-1 = non-capturing)
};

NodePtr make_node(Node::Kind k) {
    auto n = std::make_unique<Node>();
    n->kind = k;
    return n;
}

ByteClass predefined_class(char c) {
    ByteClass out;
    switch (c) {
        case 'd': out.add('0', '9'); break;
        case 'D': out.negated = true; out.add('0', '9'); break;
        case 'w':
            out.add('0', '9');
            out.add('A', 'Z');
            out.add('a', 'z');
            out.add('_', '_');
            break;
        case 'W':
            out.negated = true;
            out.add('0', '9');
            out.add('A', 'Z');
            out.add('a', 'z');
            out.add('_', '_');
            break;
        case 's':
            out.add(' ', ' ');
            out.add('\t', '\t');
            out.add('\n', '\n');
            out.add('\r', '\r');
            out.add('\f', '\f');
            out.add('\v', '\v');
            break;
        case 'S':
            out.negated = true;
            out.add(' ', ' ');
            out.add('\t', '\t');
            out.add('\n', '\n');
            out.add('\r', '\r');
            out.add('\f', '\f');
            out.add('\v', '\v');
            break;
        default: break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
public:
    Parser(const std::string& pattern) : p_(pattern) {}

    NodePtr parse(std::size_t& group_count) {
        auto root = parse_alt();
        if (pos_ != p_.size()) fail("unbalanced ')'");
        group_count = static_cast<std::size_t>(next_group_ - 1);
        return root;
    }

private:
    const std::string& p_;
    std::size_t pos_ = 0;
    int next_group_ = 1;

    [[noreturn]] void fail(const std::string& why) const {
        throw ParseError("invalid regex at offset " + std::to_string(pos_) + ": " + why);
    }

    bool eof() const { return pos_ >= p_.size(); }
    char peek() const { return p_[pos_]; }
    char take() { return p_[pos_++]; }

    NodePtr parse_alt() {
        auto first = parse_seq();
        if (eof() || peek() != '|') return first;
        auto alt = make_node(Node::Alt);
        alt->kids.push_back(std::move(first));
        while (!eof() && peek() == '|') {
            ++pos_;
            alt->kids.push_back(parse_seq());
        }
        return alt;
    }

    NodePtr parse_seq() {
        auto seq = make_node(Node::Seq);
        while (!eof() && peek() != '|' && peek() != ')') {
            seq->kids.push_back(parse_repeat());
        }
        if (seq->kids.size() == 1) return std::move(seq->kids[0]);
        return seq;
    }

    NodePtr parse_repeat() {
        auto atom = parse_atom();
        for (;;) {
            if (eof()) return atom;
            char c = peek();
            int lo, hi;
            if (c == '*') {
                lo = 0; hi = -1; ++pos_;
            } else if (c == '+') {
                lo = 1; hi = -1; ++pos_;
            } else if (c == '?') {
                lo = 0; hi = 1; ++pos_;
            } else if (c == '{') {
                std::size_t save = pos_;
                if (!parse_bounds(lo, hi)) {
                    pos_ = save;  // literal '{'
                    return atom;
                }
            } else {
                return atom;
            }
            if (atom->kind == Node::AnchorBegin || atom->kind == Node::AnchorEnd) {
                fail("quantifier applied to anchor");
            }
            auto rep = make_node(Node::Rep);
            rep->rep_min = lo;
            rep->rep_max = hi;
            if (!eof() && peek() == '?') {
                rep->greedy = false;
                ++pos_;
            }
            rep->kids.push_back(std::move(atom));
            atom = std::move(rep);
        }
    }

    // Parses "{m}", "{m,}", "{m,n}" starting at '{'. Returns false when the
    // text is not a well-formed bound (so '{' is treated as a literal).
    bool parse_bounds(int& lo, int& hi) {
        ++pos_;  // '{'
        if (eof() || !isdigit(static_cast<unsigned char>(peek()))) return false;
        lo = parse_int();
        if (eof()) return false;
        if (peek() == '}') {
            ++pos_;
            hi = lo;
            return true;
        }
        if (peek() != ',') return false;
        ++pos_;
        if (!eof() && peek() == '}') {
            ++pos_;
            hi = -1;
            return true;
        }
        if (eof() || !isdigit(static_cast<unsigned char>(peek()))) return false;
        hi = parse_int();
        if (eof() || peek() != '}') return false;
        ++pos_;
        if (hi < lo) fail("repetition bound out of order");
        return true;
    }

    int parse_int() {
        long v = 0;
        while (!eof() && isdigit(static_cast<unsigned char>(peek()))) {
            v = v * 10 + (take() - '0');
            if (v > 1000) fail("repetition bound too large");
        }
        return static_cast<int>(v);
    }

    NodePtr parse_atom() {
        if (eof()) fail("dangling operator");
        char c = take();
        switch (c) {
            case '(': {
                int index = -1;
                if (!eof() && peek() == '?') {
                    ++pos_;
                    if (eof() || peek() != ':') {
                        fail("unsupported group construct (only (?:...) is allowed)");
                    }
                    ++pos_;
                } else {
                    index = next_group_++;
                }
                auto body = parse_alt();
                if (eof() || peek() != ')') fail("missing ')'");
                ++pos_;
                auto grp = make_node(Node::Group);
                grp->group_index = index;
                grp->kids.push_back(std::move(body));
                return grp;
            }
            case '[': return parse_class();
            case '.': return make_node(Node::AnyChar);
            case '^': return make_node(Node::AnchorBegin);
            case '$': return make_node(Node::AnchorEnd);
            case '*':
            case '+':
            case '?': fail("quantifier with nothing to repeat");
            case '\\': return parse_escape(false);
            default: {
                auto n = make_node(Node::Literal);
                n->lit = static_cast<unsigned char>(c);
                return n;
            }
        }
    }

    NodePtr parse_escape(bool in_class) {
        if (eof()) fail("trailing backslash");
        char c = take();
        switch (c) {
            case 'd': case 'D': case 'w': case 'W': case 's': case 'S': {
                auto n = make_node(Node::CharCls);
                n->cls = predefined_class(c);
                return n;
            }
            case 't': return literal_node('\t');
            case 'n': return literal_node('\n');
            case 'r': return literal_node('\r');
            case 'f': return literal_node('\f');
            case 'v': return literal_node('\v');
            case '0': return literal_node('\0');
            default:
                if (isalnum(static_cast<unsigned char>(c))) {
                    if (isdigit(static_cast<unsigned char>(c))) {
                        fail("backreferences are not supported");
                    }
                    fail(std::string("unsupported escape \\") + c);
                }
                (void)in_class;
                return literal_node(static_cast<unsigned char>(c));
        }
    }

    NodePtr literal_node(unsigned char c) {
        auto n = make_node(Node::Literal);
        n->lit = c;
        return n;
    }

    NodePtr parse_class() {
        auto n = make_node(Node::CharCls);
        if (!eof() && peek() == '^') {
            n->cls.negated = true;
            ++pos_;
        }
        bool first = true;
        for (;;) {
            if (eof()) fail("missing ']'");
            char c = take();
            if (c == ']' && !first) break;
            first = false;
            unsigned char lo;
            if (c == '\\') {
                if (eof()) fail("trailing backslash in class");
                char e = take();
                switch (e) {
                    case 'd': case 'D': case 'w': case 'W': case 's': case 'S': {
                        ByteClass pre = predefined_class(e);
                        if (pre.negated) {
                            fail("negated class escape inside [...] is not supported");
                        }
                        for (auto& r : pre.ranges) n->cls.ranges.push_back(r);
                        continue;
                    }
                    case 't': lo = '\t'; break;
                    case 'n': lo = '\n'; break;
                    case 'r': lo = '\r'; break;
                    case 'f': lo = '\f'; break;
                    case 'v': lo = '\v'; break;
                    default:
                        if (isalnum(static_cast<unsigned char>(e))) {
                            fail(std::string("unsupported escape \\") + e + " in class");
                        }
                        lo = static_cast<unsigned char>(e);
                }
            } else {
                lo = static_cast<unsigned char>(c);
            }
            // Range when '-' is followed by something other than ']'.
            if (!eof() && peek() == '-' && pos_ + 1 < p_.size() && p_[pos_ + 1] != ']') {
                ++pos_;  // '-'
                char h = take();
                unsigned char hi;
                if (h == '\\') {
                    if (eof()) fail("trailing backslash in class");
                    char e = take();
                    switch (e) {
                        case 't': hi = '\t'; break;
                        case 'n': hi = '\n'; break;
                        case 'r': hi = '\r'; break;
                        default:
                            if (isalnum(static_cast<unsigned char>(e))) {
                                fail("bad range endpoint");
                            }
                            hi = static_cast<unsigned char>(e);
                    }
                } else {
                    hi = static_cast<unsigned char>(h);
                }
                if (hi < lo) fail("character range out of order");
                n->cls.add(lo, hi);
            } else {
                n->cls.add(lo, lo);
            }
        }
        return n;
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// Compiled program

struct Regex::Program {
    enum class Op : std::uint8_t {
        Char, Any, AnyByte, Class, Save, Split, Jmp, AssertBegin, AssertEnd, Match
    };
    struct Inst {
        Op op;
        unsigned char c = 0;    // Char
        std::uint32_t cls = 0;  // Class
        std::uint32_t x = 0, y = 0;
        std::uint32_t save = 0;
    };
    std::vector<Inst> insts;
    std::vector<ByteClass> classes;
    std::size_t nslots = 0;   // 2 * (group_count + 1)
    std::uint32_t start = 0;  // entry after the unanchored prefix
};

namespace {

constexpr std::size_t kMaxProgramSize = 20000;

class Compiler {
public:
    explicit Compiler(std::size_t ngroups) {
        prog_ = std::make_shared<Regex::Program>();
        prog_->nslots = 2 * (ngroups + 1);
    }

    std::shared_ptr<const Regex::Program> compile(const Node& root) {
        using P = Regex::Program;
        // Unanchored prefix: lazily consume bytes until the body can start.
        // 0: Split 3, 1   (prefer entering the body — leftmost match wins)
        // 1: Any
        // 2: Jmp 0
        // 3: Save 0 ... body ... Save 1, Match
        emit({P::Op::Split, 0, 0, 3, 1, 0});
        emit({P::Op::AnyByte, 0, 0, 0, 0, 0});
        emit({P::Op::Jmp, 0, 0, 0, 0, 0});
        prog_->start = 3;
        emit({P::Op::Save, 0, 0, 0, 0, 0});
        emit_node(root);
        emit({P::Op::Save, 0, 0, 0, 0, 1});
        emit({P::Op::Match, 0, 0, 0, 0, 0});
        return prog_;
    }

private:
    std::shared_ptr<Regex::Program> prog_;

    std::uint32_t emit(Regex::Program::Inst inst) {
        if (prog_->insts.size() >= kMaxProgramSize) {
            throw ParseError("regex pattern compiles to too many states");
        }
        prog_->insts.push_back(inst);
        return static_cast<std::uint32_t>(prog_->insts.size() - 1);
    }

    std::uint32_t here() const { return static_cast<std::uint32_t>(prog_->insts.size()); }

    void emit_node(const Node& n) {
        using P = Regex::Program;
        switch (n.kind) {
            case Node::Literal:
                emit({P::Op::Char, n.lit, 0, 0, 0, 0});
                break;
            case Node::AnyChar:
                emit({P::Op::Any, 0, 0, 0, 0, 0});
                break;
            case Node::CharCls: {
                prog_->classes.push_back(n.cls);
                emit({P::Op::Class, 0, static_cast<std::uint32_t>(prog_->classes.size() - 1), 0, 0, 0});
                break;
            }
            case Node::AnchorBegin:
                emit({P::Op::AssertBegin, 0, 0, 0, 0, 0});
                break;
            case Node::AnchorEnd:
                emit({P::Op::AssertEnd, 0, 0, 0, 0, 0});
                break;
            case Node::Seq:
                for (const auto& k : n.kids) emit_node(*k);
                break;
            case Node::Group: {
                if (n.group_index < 0) {
                    emit_node(*n.kids[0]);
                } else {
                    std::uint32_t s0 = static_cast<std::uint32_t>(2 * n.group_index);
                    emit({P::Op::Save, 0, 0, 0, 0, s0});
                    emit_node(*n.kids[0]);
                    emit({P::Op::Save, 0, 0, 0, 0, s0 + 1});
                }
                break;
            }
            case Node::Alt: {
                // Chain of splits, one branch per alternative.
                std::vector<std::uint32_t> jumps;
                for (std::size_t i = 0; i < n.kids.size(); ++i) {
                    if (i + 1 < n.kids.size()) {
                        std::uint32_t sp = emit({P::Op::Split, 0, 0, 0, 0, 0});
                        prog_->insts[sp].x = here();
                        emit_node(*n.kids[i]);
                        jumps.push_back(emit({P::Op::Jmp, 0, 0, 0, 0, 0}));
                        prog_->insts[sp].y = here();
                    } else {
                        emit_node(*n.kids[i]);
                    }
                }
                for (std::uint32_t j : jumps) prog_->insts[j].x = here();
                break;
            }
            case Node::Rep:
                emit_repeat(n);
                break;
        }
    }

    void emit_repeat(const Node& n) {
        using P = Regex::Program;
        const Node& body = *n.kids[0];
        int lo = n.rep_min, hi = n.rep_max;

        // Mandatory copies.
        for (int i = 0; i < lo; ++i) emit_node(body);

        if (hi == -1) {
            // Kleene tail: loop zero or more times.
            std::uint32_t l1 = emit({P::Op::Split, 0, 0, 0, 0, 0});
            std::uint32_t b = here();
            emit_node(body);
            emit({P::Op::Jmp, 0, 0, l1, 0, 0});
            std::uint32_t out = here();
            if (n.greedy) {
                prog_->insts[l1].x = b;
                prog_->insts[l1].y = out;
            } else {
                prog_->insts[l1].x = out;
                prog_->insts[l1].y = b;
            }
        } else {
            // (hi - lo) optional copies, each individually skippable.
            std::vector<std::uint32_t> splits;
            for (int i = lo; i < hi; ++i) {
                std::uint32_t sp = emit({P::Op::Split, 0, 0, 0, 0, 0});
                splits.push_back(sp);
                std::uint32_t b = here();
                if (n.greedy) {
                    prog_->insts[sp].x = b;
                } else {
                    prog_->insts[sp].y = b;
                }
                emit_node(body);
            }
            std::uint32_t out = here();
            for (std::uint32_t sp : splits) {
                if (n.greedy) {
                    prog_->insts[sp].y = out;
                } else {
                    prog_->insts[sp].x = out;
                }
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Pike VM execution

struct Thread {
    std::uint32_t pc;
    std::vector<int> caps;
};

class Vm {
public:
    Vm(const Regex::Program& prog, std::string_view text) : prog_(prog), text_(text) {
        visited_.assign(prog.insts.size(), 0);
    }

    // Leftmost-first search starting at `from`.
    std::optional<MatchResult> run(std::size_t from) {
        std::vector<Thread> clist, nlist;
        std::vector<int> caps(prog_.nslots, -1);
        std::optional<std::vector<int>> matched;

        ++stamp_;
        add_thread(clist, 0, caps, from);

        for (std::size_t pos = from;; ++pos) {
            bool at_end = pos >= text_.size();
            unsigned char c = at_end ? 0 : static_cast<unsigned char>(text_[pos]);
            ++stamp_;
            for (std::size_t i = 0; i < clist.size(); ++i) {
                const auto& inst = prog_.insts[clist[i].pc];
                using Op = Regex::Program::Op;
                switch (inst.op) {
                    case Op::Char:
                        if (!at_end && c == inst.c) {
                            add_thread(nlist, clist[i].pc + 1, clist[i].caps, pos + 1);
                        }
                        break;
                    case Op::Any:
                        if (!at_end && c != '\n') {
                            add_thread(nlist, clist[i].pc + 1, clist[i].caps, pos + 1);
                        }
                        break;
                    case Op::AnyByte:
                        if (!at_end) {
                            add_thread(nlist, clist[i].pc + 1, clist[i].caps, pos + 1);
                        }
                        break;
                    case Op::Class:
                        if (!at_end && prog_.classes[inst.cls].contains(c)) {
                            add_thread(nlist, clist[i].pc + 1, clist[i].caps, pos + 1);
                        }
                        break;
                    case Op::Match:
                        matched = clist[i].caps;
                        clist.resize(i);  // lower-priority threads can't do better
                        break;
                    default:
                        break;  // epsilon transitions resolved in add_thread
                }
            }
            clist.swap(nlist);
            nlist.clear();
            if (at_end || clist.empty()) break;
        }

        if (!matched) return std::nullopt;
        MatchResult r;
        r.whole = {static_cast<std::size_t>((*matched)[0]), static_cast<std::size_t>((*matched)[1])};
        std::size_t ngroups = prog_.nslots / 2 - 1;
        r.groups.resize(ngroups);
        for (std::size_t g = 1; g <= ngroups; ++g) {
            int b = (*matched)[2 * g], e = (*matched)[2 * g + 1];
            if (b >= 0 && e >= 0) r.groups[g - 1] = Span{static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
        }
        return r;
    }

private:
    const Regex::Program& prog_;
    std::string_view text_;
    std::vector<std::uint64_t> visited_;
    std::uint64_t stamp_ = 0;

    void add_thread(std::vector<Thread>& list, std::uint32_t pc, const std::vector<int>& caps, std::size_t pos) {
        if (visited_[pc] == stamp_) return;
        visited_[pc] = stamp_;
        const auto& inst = prog_.insts[pc];
        using Op = Regex::Program::Op;
        switch (inst.op) {
            case Op::Jmp:
                add_thread(list, inst.x, caps, pos);
                break;
            case Op::Split:
                add_thread(list, inst.x, caps, pos);
                add_thread(list, inst.y, caps, pos);
                break;
            case Op::Save: {
                std::vector<int> next = caps;
                next[inst.save] = static_cast<int>(pos);
                add_thread(list, pc + 1, next, pos);
                break;
            }
            case Op::AssertBegin:
                if (pos == 0) add_thread(list, pc + 1, caps, pos);
                break;
            case Op::AssertEnd:
                if (pos == text_.size()) add_thread(list, pc + 1, caps, pos);
                break;
            default:
                list.push_back({pc, caps});
                break;
        }
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// Public API

Regex Regex::compile(const std::string& pattern) {
    Parser parser(pattern);
    std::size_t ngroups = 0;
    NodePtr root = parser.parse(ngroups);
    Compiler compiler(ngroups);
    Regex re;
    re.pattern_ = pattern;
    re.ngroups_ = ngroups;
    re.prog_ = compiler.compile(*root);
    return re;
}

std::optional<MatchResult> Regex::search(std::string_view text) const {
    Vm vm(*prog_, text);
    return vm.run(0);
}

std::vector<MatchResult> Regex::find_all(std::string_view text) const {
    std::vector<MatchResult> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        Vm vm(*prog_, text.substr(pos));
        auto m = vm.run(0);
        if (!m) break;
        // Rebase spans onto the full text.
        m->whole.begin += pos;
        m->whole.end += pos;
        for (auto& g : m->groups) {
            if (g) {
                g->begin += pos;
                g->end += pos;
            }
        }
        out.push_back(*m);
        if (m->whole.end > pos) {
            pos = m->whole.end;
        } else {
            ++pos;  // zero-width match: step forward to avoid spinning
        }
    }
    return out;
}

std::string Regex::replace_all(std::string_view text, std::string_view replacement) const {
    std::string out;
    std::size_t last = 0;
    for (const auto& m : find_all(text)) {
        out.append(text.substr(last, m.whole.begin - last));
        out.append(replacement);
        last = m.whole.end;
    }
    out.append(text.substr(last));
    return out;
}

// ---------------------------------------------------------------------------
// Pattern analysis helpers

namespace {

// Appends the literal/group decomposition of `n`; returns false when the node
// is not expressible as literals and capture groups.
bool decompose_node(const Node& n, std::vector<TemplatePart>& parts, bool at_top) {
    switch (n.kind) {
        case Node::Literal: {
            if (parts.empty() || parts.back().group != 0) {
                parts.push_back(TemplatePart{});
            }
            parts.back().literal.push_back(static_cast<char>(n.lit));
            return true;
        }
        case Node::Seq: {
            for (const auto& k : n.kids) {
                if (!decompose_node(*k, parts, at_top)) return false;
            }
            return true;
        }
        case Node::Group: {
            if (n.group_index < 0) return false;
            TemplatePart p;
            p.group = static_cast<std::size_t>(n.group_index);
            parts.push_back(p);
            return true;
        }
        case Node::AnchorBegin:
        case Node::AnchorEnd:
            return at_top;  // anchors allowed only at the outermost level
        default:
            return false;
    }
}

bool class_is_numeric_without_comma(const ByteClass& cls) {
    if (cls.negated) return false;
    return cls.covers_range('0', '9') && !cls.contains(',');
}

bool scan_numeric_classes(const Node& n) {
    switch (n.kind) {
        case Node::CharCls:
            return class_is_numeric_without_comma(n.cls);
        case Node::Seq:
        case Node::Alt:
            for (const auto& k : n.kids) {
                if (scan_numeric_classes(*k)) return true;
            }
            return false;
        case Node::Rep:
        case Node::Group:
            return scan_numeric_classes(*n.kids[0]);
        default:
            return false;
    }
}

}  // namespace

std::optional<std::vector<TemplatePart>> decompose_literal_groups(const std::string& pattern) {
    try {
        Parser parser(pattern);
        std::size_t ngroups = 0;
        NodePtr root = parser.parse(ngroups);
        std::vector<TemplatePart> parts;
        if (!decompose_node(*root, parts, true)) return std::nullopt;
        return parts;
    } catch (const ParseError&) {
        return std::nullopt;
    }
}

bool has_comma_less_numeric_class(const std::string& pattern) {
    try {
        Parser parser(pattern);
        std::size_t ngroups = 0;
        NodePtr root = parser.parse(ngroups);
        return scan_numeric_classes(*root);
    } catch (const ParseError&) {
        return false;
    }
}

}  // namespace canontab::rx
