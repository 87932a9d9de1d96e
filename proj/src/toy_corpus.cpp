#include "mmf3/toy_corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <string>

#include "mmf3/errors.hpp"

namespace mmf3::toy {

namespace {

// Builds the node list in pre-order as the tree is described.
class TreeBuilder {
  public:
    int open(const std::string& label) {
        const int id = add(label);
        stack_.push_back(id);
        return id;
    }
    void close() { stack_.pop_back(); }
    int leaf(const std::string& value) { return add("ter_" + value); }

    ast::Ast finish() { return ast::validate_ast(std::move(record_)); }

  private:
    int add(const std::string& label) {
        const int id = static_cast<int>(record_.nodes.size());
        record_.nodes.push_back({id, label, {}, false});
        if (!stack_.empty()) record_.nodes[static_cast<std::size_t>(stack_.back())].children.push_back(id);
        return id;
    }
    ast::AstRecord record_;
    std::vector<int> stack_;
};

struct Expr {
    enum class Kind { Name, Literal, Binary, Call } kind = Kind::Name;
    std::string text; // name, literal, operator or callee
    std::vector<Expr> args;
};

const std::array<const char*, 6> kVerbs{"compute", "get", "calc", "find", "make", "eval"};
const std::array<const char*, 12> kNouns{"total", "sum", "max", "min", "ratio", "diff",
                                         "product", "average", "score", "count", "size", "value"};
const std::array<const char*, 14> kParams{"a",        "b",     "x",      "y",     "count",     "total", "rate",
                                          "width",    "height", "price", "itemCount", "max_value", "base", "offset"};
const std::array<const char*, 3> kTypes{"int", "double", "long"};
const std::array<const char*, 5> kLiterals{"1", "2", "10", "100", "0.5"};

template <typename Arr>
std::string pick(Rng& rng, const Arr& arr) {
    return arr[rng.below(arr.size())];
}

Expr random_expr(Rng& rng, const std::vector<std::string>& params, int depth) {
    const auto roll = rng.below(10);
    if (depth <= 0 || roll < 3) {
        if (rng.below(5) == 0) return {Expr::Kind::Literal, pick(rng, kLiterals), {}};
        return {Expr::Kind::Name, params[rng.below(params.size())], {}};
    }
    if (roll < 5) {
        return {Expr::Kind::Call, rng.below(2) == 0 ? "max" : "min",
                {random_expr(rng, params, depth - 1), random_expr(rng, params, depth - 1)}};
    }
    static const std::array<const char*, 4> ops{"+", "-", "*", "/"};
    return {Expr::Kind::Binary, pick(rng, ops), {random_expr(rng, params, depth - 1), random_expr(rng, params, depth - 1)}};
}

std::string render(const Expr& e) {
    switch (e.kind) {
    case Expr::Kind::Name:
    case Expr::Kind::Literal: return e.text;
    case Expr::Kind::Binary: return "(" + render(e.args[0]) + " " + e.text + " " + render(e.args[1]) + ")";
    case Expr::Kind::Call: return "Math." + e.text + "(" + render(e.args[0]) + ", " + render(e.args[1]) + ")";
    }
    return {};
}

std::string words(const std::string& identifier) {
    std::string out;
    for (const auto& w : corpus::split_identifier(identifier)) out += (out.empty() ? "" : " ") + w;
    return out;
}

std::string describe(const Expr& e) {
    switch (e.kind) {
    case Expr::Kind::Name: return words(e.text);
    case Expr::Kind::Literal: return e.text;
    case Expr::Kind::Binary: {
        const std::string what = e.text == "+" ? "sum" : e.text == "-" ? "difference" : e.text == "*" ? "product" : "quotient";
        return "the " + what + " of " + describe(e.args[0]) + " and " + describe(e.args[1]);
    }
    case Expr::Kind::Call:
        return std::string("the ") + (e.text == "max" ? "maximum" : "minimum") + " of " + describe(e.args[0]) +
               " and " + describe(e.args[1]);
    }
    return {};
}

void emit_expr(TreeBuilder& tb, const Expr& e) {
    switch (e.kind) {
    case Expr::Kind::Name:
    case Expr::Kind::Literal: tb.leaf(e.text); break;
    case Expr::Kind::Binary:
        tb.open("BinaryOperation");
        emit_expr(tb, e.args[0]);
        tb.leaf(e.text);
        emit_expr(tb, e.args[1]);
        tb.close();
        break;
    case Expr::Kind::Call:
        tb.open("MethodInvocation");
        tb.leaf("Math");
        tb.leaf(e.text);
        tb.open("Arguments");
        emit_expr(tb, e.args[0]);
        emit_expr(tb, e.args[1]);
        tb.close();
        tb.close();
        break;
    }
}

} // namespace

corpus::Sample random_sample(Rng& rng, const std::string& id) {
    const std::string verb = pick(rng, kVerbs);
    std::string noun = pick(rng, kNouns);
    const bool snake = rng.below(2) == 0;
    const std::string name = snake ? verb + "_" + noun : verb + static_cast<char>(noun[0] - 'a' + 'A') + noun.substr(1);
    const std::string type = pick(rng, kTypes);

    std::vector<std::string> params;
    const auto n_params = 1 + rng.below(3);
    while (params.size() < n_params) {
        auto p = pick(rng, kParams);
        if (std::find(params.begin(), params.end(), p) == params.end()) params.push_back(p);
    }
    const Expr body = random_expr(rng, params, 2);
    const bool use_local = rng.below(4) == 0;

    std::string code = type + " " + name + "(";
    for (std::size_t i = 0; i < params.size(); ++i) code += (i ? ", " : "") + type + " " + params[i];
    code += ") { ";
    if (use_local) {
        code += type + " result = " + render(body) + "; return result; }";
    } else {
        code += "return " + render(body) + "; }";
    }

    TreeBuilder tb;
    tb.open("MethodDeclaration");
    tb.open("BasicType");
    tb.leaf(type);
    tb.close();
    tb.leaf(name);
    tb.open("FormalParameters");
    for (const auto& p : params) {
        tb.open("FormalParameter");
        tb.open("BasicType");
        tb.leaf(type);
        tb.close();
        tb.leaf(p);
        tb.close();
    }
    tb.close();
    tb.open("Body");
    if (use_local) {
        tb.open("LocalVariableDeclaration");
        tb.open("BasicType");
        tb.leaf(type);
        tb.close();
        tb.leaf("result");
        emit_expr(tb, body);
        tb.close();
        tb.open("ReturnStatement");
        tb.leaf("return");
        tb.leaf("result");
        tb.close();
    } else {
        tb.open("ReturnStatement");
        tb.leaf("return");
        emit_expr(tb, body);
        tb.close();
    }
    tb.close();
    tb.close();

    corpus::Sample s;
    s.id = id;
    s.code = std::move(code);
    s.summary = verb + " " + words(noun) + " as " + describe(body);
    s.tree = std::make_shared<const ast::Ast>(tb.finish());
    return s;
}

std::vector<corpus::Sample> generate(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<corpus::Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_sample(rng, "toy-" + std::to_string(i)));
    return out;
}

corpus::Sample matching_example() {
    // Tokens: int sum ( int a , int b ) { return a + b ; }
    //         0   1   2 3   4 5 6   7 8 9 10     11 12 13 14 15
    TreeBuilder tb;
    tb.open("MethodDeclaration");   // 0
    tb.open("FormalParameter");     // 1
    tb.leaf("int");                 // 2 -> token 0
    tb.leaf("a");                   // 3 -> token 4
    tb.close();
    tb.open("FormalParameter");     // 4
    tb.leaf("int");                 // 5 -> token 6
    tb.leaf("b");                   // 6 -> token 7
    tb.close();
    tb.open("ReturnStatement");     // 7
    tb.leaf("return");              // 8 -> token 10
    tb.open("BinaryOperation");     // 9
    tb.leaf("a");                   // 10 -> token 11
    tb.leaf("+");                   // 11 -> token 12
    tb.leaf("b");                   // 12 -> token 13
    tb.close();
    tb.close();
    tb.close();

    corpus::Sample s;
    s.id = "match-example";
    s.code = "int sum(int a, int b) { return a + b; }";
    s.summary = "return the sum of a and b";
    s.tree = std::make_shared<const ast::Ast>(tb.finish());
    return s;
}

nlohmann::json to_json(const corpus::Sample& sample) {
    return {{"id", sample.id}, {"code", sample.code}, {"summary", sample.summary}, {"ast", sample.tree->to_json()}};
}

void write_dataset(const std::vector<corpus::Sample>& samples, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

} // namespace mmf3::toy
