#include "pyguard/corpus.hpp"

#include "json.hpp"
#include "pyguard/errors.hpp"
#include "rng.hpp"

#include <array>
#include <fstream>
#include <map>
#include <span>
#include <string_view>

namespace pyguard {

namespace {

// Each template is a complete function. Placeholders in braces are filled
// from the pools below; "{filler}" expands to at most one neutral statement.
// The statement that decides the label stays within the first 40 tokens so
// truncated training windows keep it.
// Safe templates may also contain "{guard}", one validation or sanitizing
// statement drawn from the type's guard pool.
struct TemplatePair {
    std::vector<std::string_view> vulnerable;
    std::vector<std::string_view> safe;
    std::vector<std::string_view> guards;
};

const TemplatePair& templates_for(VulnType type) {
    static const std::map<VulnType, TemplatePair> table = {
        {VulnType::sql_injection,
         {{
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\")\n{filler}"
              "    {cur}.execute(\"SELECT * FROM {w} WHERE {w2} = '\" + {v} + \"'\")\n"
              "    return {cur}.fetchall()\n",
              "def {fn}({req}):\n    {v} = {req}.form[\"{w}\"]\n{filler}"
              "    {cur}.execute(\"DELETE FROM {w} WHERE id = %s\" % {v})\n    {db}.commit()\n",
              "def {fn}({v}):\n{filler}    {q} = \"SELECT * FROM {w} WHERE {w2} = '{}'\".format({v})\n"
              "    {cur}.execute({q})\n    return {cur}.fetchone()\n",
          },
          {
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\")\n{guard}{filler}"
              "    {cur}.execute(\"SELECT * FROM {w} WHERE {w2} = %s\", ({v},))\n"
              "    return {cur}.fetchall()\n",
              "def {fn}({req}):\n    {v} = {req}.form[\"{w}\"]\n{guard}{filler}"
              "    {cur}.execute(\"DELETE FROM {w} WHERE id = ?\", [{v}])\n    {db}.commit()\n",
              "def {fn}({v}):\n{guard}{filler}    {q} = \"SELECT * FROM {w} WHERE {w2} = %s\"\n"
              "    {cur}.execute({q}, ({v},))\n    return {cur}.fetchone()\n",
          },
          {
              "    if not {v}.isalnum():\n        abort(400)\n",
              "    {v} = int({v})\n",
              "    assert_valid_id({v})\n",
          }}},
        {VulnType::xss,
         {{
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\")\n{filler}"
              "    return \"<h1>\" + {v} + \"</h1>\"\n",
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\", \"\")\n{filler}"
              "    return make_response(\"<p>%s</p>\" % {v})\n",
              "def {fn}({req}):\n{filler}    {q} = \"<div>{}</div>\".format({req}.args[\"{w}\"])\n"
              "    return {q}\n",
          },
          {
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\")\n{guard}{filler}"
              "    return \"<h1>\" + escape({v}) + \"</h1>\"\n",
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\", \"\")\n{guard}{filler}"
              "    return render_template(\"{w}.html\", {w2}={v})\n",
              "def {fn}({req}):\n    {v} = {req}.args[\"{w}\"]\n{guard}{filler}"
              "    {q} = \"<div>{}</div>\".format(html.escape({v}))\n    return {q}\n",
          },
          {
              "    {v} = bleach.clean({v}, strip=True)\n",
              "    if \"<\" in {v}:\n        abort(400)\n",
              "    {v} = markupsafe.escape({v})\n",
          }}},
        {VulnType::command_injection,
         {{
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\")\n{filler}"
              "    os.system(\"ping -c 1 \" + {v})\n    return \"ok\"\n",
              "def {fn}({v}):\n{filler}    return subprocess.check_output(\"ls \" + {v}, shell=True)\n",
              "def {fn}({req}):\n    {v} = {req}.form[\"{w}\"]\n{filler}"
              "    return os.popen(\"cat %s\" % {v}).read()\n",
          },
          {
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\")\n{guard}{filler}"
              "    subprocess.run([\"ping\", \"-c\", \"1\", {v}])\n    return \"ok\"\n",
              "def {fn}({v}):\n{guard}{filler}    return subprocess.check_output([\"ls\", {v}])\n",
              "def {fn}({req}):\n    {v} = {req}.form[\"{w}\"]\n{guard}{filler}"
              "    return open(os.path.basename({v})).read()\n",
          },
          {
              "    {v} = shlex.quote({v})\n",
              "    if not re.fullmatch(r\"[a-z0-9.]+\", {v}):\n        abort(400)\n",
              "    check_hostname({v})\n",
          }}},
        {VulnType::xsrf,
         {{
              "@csrf_exempt\ndef {fn}({req}):\n{filler}    {v} = {req}.POST[\"{w}\"]\n"
              "    Account.objects.filter(id={v}).delete()\n    return HttpResponse(\"ok\")\n",
              "@app.route(\"/{w}\", methods=[\"POST\"])\n@csrf.exempt\ndef {fn}():\n{filler}"
              "    {v} = request.form[\"{w2}\"]\n    return transfer({v})\n",
              "app.config[\"WTF_CSRF_ENABLED\"] = False\ndef {fn}({req}):\n{filler}"
              "    return update_email({req}.form[\"{w}\"])\n",
          },
          {
              "@csrf_protect\ndef {fn}({req}):\n{guard}{filler}    {v} = {req}.POST[\"{w}\"]\n"
              "    Account.objects.filter(id={v}).delete()\n    return HttpResponse(\"ok\")\n",
              "@app.route(\"/{w}\", methods=[\"POST\"])\n@login_required\ndef {fn}():\n{guard}{filler}"
              "    {v} = request.form[\"{w2}\"]\n    return transfer({v})\n",
              "app.config[\"WTF_CSRF_ENABLED\"] = True\ndef {fn}({req}):\n{guard}{filler}"
              "    return update_email({req}.form[\"{w}\"])\n",
          },
          {
              "    csrf.protect()\n",
              "    if not validate_csrf(session.get(\"csrf_token\")):\n        abort(403)\n",
              "    verify_origin(request.headers)\n",
          }}},
        {VulnType::path_disclosure,
         {{
              "def {fn}({v}):\n    try:\n        return open({v}).read()\n"
              "    except Exception as {e}:\n        return str({e}), 500\n",
              "def {fn}({v}):\n    try:\n        return load({v})\n    except OSError:\n"
              "        return traceback.format_exc()\n",
              "def {fn}():\n{filler}    return jsonify(path=os.path.abspath(__file__))\n",
          },
          {
              "def {fn}({v}):\n    try:\n        return open({v}).read()\n"
              "    except Exception:\n        logger.exception(\"{w}\")\n        return \"error\", 500\n",
              "def {fn}({v}):\n    try:\n        return load({v})\n    except OSError:\n"
              "        abort(404)\n",
              "def {fn}():\n{filler}    return jsonify(status=\"{w}\")\n",
          },
          {}}},
        {VulnType::remote_code_execution,
         {{
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\")\n{filler}    return str(eval({v}))\n",
              "def {fn}({req}):\n{filler}    {v} = pickle.loads({req}.data)\n    return process({v})\n",
              "def {fn}({req}):\n    {v} = {req}.form[\"{w}\"]\n{filler}    exec({v})\n"
              "    return \"done\"\n",
          },
          {
              "def {fn}({req}):\n    {v} = {req}.args.get(\"{w}\")\n{guard}{filler}"
              "    return str(ast.literal_eval({v}))\n",
              "def {fn}({req}):\n{filler}    {v} = json.loads({req}.data)\n{guard}    return process({v})\n",
              "def {fn}({req}):\n    {v} = {req}.form[\"{w}\"]\n{guard}{filler}"
              "    return HANDLERS[{v}]()\n",
          },
          {
              "    if not {v}.isidentifier():\n        abort(400)\n",
              "    {v} = schema.validate({v})\n",
              "    require_allowed({v}, ALLOWED)\n",
          }}},
        {VulnType::open_redirect,
         {{
              "def {fn}({req}):\n    {v} = {req}.args.get(\"next\")\n{filler}    return redirect({v})\n",
              "def {fn}({req}):\n{filler}    return redirect({req}.args[\"{w}\"])\n",
              "def {fn}({req}):\n    {v} = {req}.GET.get(\"{w}\")\n{filler}"
              "    return HttpResponseRedirect({v})\n",
          },
          {
              "def {fn}({req}):\n    {v} = {req}.args.get(\"next\")\n{filler}"
              "    return redirect(url_for(\"{w}\"))\n",
              "def {fn}({req}):\n{filler}    return redirect(\"/{w}\")\n",
              "def {fn}({req}):\n    {v} = {req}.GET.get(\"{w}\")\n{filler}"
              "    if not is_safe_url({v}):\n        {v} = \"/\"\n    return HttpResponseRedirect({v})\n",
          },
          {}}},
    };
    return table.at(type);
}

constexpr std::array<std::string_view, 12> kFunctionNames = {
    "view", "handle", "index", "search", "lookup", "process_item",
    "show", "profile", "admin_panel", "api_call", "fetch_record", "run_task"};
constexpr std::array<std::string_view, 12> kVariables = {
    "name", "user", "uid", "value", "item", "target",
    "term", "key", "param", "arg", "entry", "ident"};
constexpr std::array<std::string_view, 3> kRequests = {"request", "req", "r"};
constexpr std::array<std::string_view, 3> kCursors = {"cursor", "cur", "db_cursor"};
constexpr std::array<std::string_view, 3> kConnections = {"conn", "db", "connection"};
constexpr std::array<std::string_view, 3> kQueries = {"query", "sql", "text"};
constexpr std::array<std::string_view, 3> kErrors = {"e", "exc", "err"};
constexpr std::array<std::string_view, 10> kWords = {
    "users", "orders", "accounts", "items", "title", "email", "id", "page", "q", "session"};
constexpr std::array<std::string_view, 6> kFillers = {
    "    logger.info(\"{w}\")\n",
    "    count = {num}\n",
    "    limit = len(items)\n",
    "    start = time.time()\n",
    "    flag = settings.get(\"{w}\", {num})\n",
    "    total = count + {num}\n",
};

template <std::size_t N>
std::string_view pick(detail::Rng& rng, const std::array<std::string_view, N>& pool) {
    return pool[rng.below(N)];
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    for (std::size_t at = s.find(from); at != std::string::npos; at = s.find(from, at + to.size())) {
        s.replace(at, from.size(), to);
    }
    return s;
}

std::string fillers(detail::Rng& rng) {
    std::string out;
    const std::uint64_t count = rng.below(2);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string line(pick(rng, kFillers));
        line = replace_all(line, "{w}", pick(rng, kWords));
        line = replace_all(line, "{num}", std::to_string(rng.below(100)));
        out += line;
    }
    return out;
}

std::string instantiate(std::string_view tmpl, std::span<const std::string_view> guards,
                        detail::Rng& rng) {
    std::string s(tmpl);
    if (s.find("{guard}") != std::string::npos) {
        s = replace_all(s, "{guard}", guards[rng.below(guards.size())]);
    }
    // "{}" inside .format() string literals is literal text, not a slot.
    s = replace_all(s, "{filler}", fillers(rng));
    s = replace_all(s, "{fn}", pick(rng, kFunctionNames));
    s = replace_all(s, "{req}", pick(rng, kRequests));
    s = replace_all(s, "{v}", pick(rng, kVariables));
    s = replace_all(s, "{cur}", pick(rng, kCursors));
    s = replace_all(s, "{db}", pick(rng, kConnections));
    s = replace_all(s, "{q}", pick(rng, kQueries));
    s = replace_all(s, "{e}", pick(rng, kErrors));
    s = replace_all(s, "{w}", pick(rng, kWords));
    s = replace_all(s, "{w2}", pick(rng, kWords));
    return s;
}

std::string_view source_name(SampleSource s) {
    return s == SampleSource::synthetic ? "synthetic" : "external";
}

}  // namespace

std::vector<LabeledSample> generate(VulnType type, std::size_t n, std::uint64_t seed) {
    if (n < 2 || n % 2 != 0) throw InvalidCount("sample count must be even and >= 2");
    const TemplatePair& pair = templates_for(type);
    detail::Rng rng(detail::mix_seed(seed, static_cast<std::uint64_t>(type) + 1));
    std::vector<LabeledSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i % 2 == 0 ? 1 : 0;
        const auto& pool = label ? pair.vulnerable : pair.safe;
        const std::string_view tmpl = pool[rng.below(pool.size())];
        out.push_back(LabeledSample{instantiate(tmpl, pair.guards, rng), label, type, SampleSource::synthetic});
    }
    return out;
}

std::string to_jsonl_line(const LabeledSample& s) {
    return nlohmann::json{{"code", s.code},
                          {"label", s.label},
                          {"type", std::string(to_string(s.vuln_type))},
                          {"source", std::string(source_name(s.source))}}
        .dump();
}

void save_jsonl(const std::vector<LabeledSample>& samples, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const LabeledSample& s : samples) out << to_jsonl_line(s) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<LabeledSample> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<LabeledSample> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw SchemaError(number, "not a JSON object");
        LabeledSample s;
        if (!j.contains("code") || !j["code"].is_string() || j["code"].get<std::string>().empty()) {
            throw SchemaError(number, "missing or empty \"code\"");
        }
        s.code = j["code"].get<std::string>();
        if (!j.contains("label") || !j["label"].is_number_integer()) {
            throw SchemaError(number, "missing integer \"label\"");
        }
        s.label = j["label"].get<int>();
        if (s.label != 0 && s.label != 1) throw SchemaError(number, "\"label\" must be 0 or 1");
        if (!j.contains("type") || !j["type"].is_string()) {
            throw SchemaError(number, "missing \"type\"");
        }
        auto type = parse_vuln_type(j["type"].get<std::string>());
        if (!type) throw SchemaError(number, "unknown vulnerability type");
        s.vuln_type = *type;
        if (!j.contains("source") || !j["source"].is_string()) {
            throw SchemaError(number, "missing \"source\"");
        }
        const std::string src = j["source"].get<std::string>();
        if (src == "synthetic") s.source = SampleSource::synthetic;
        else if (src == "external") s.source = SampleSource::external;
        else throw SchemaError(number, "\"source\" must be synthetic or external");
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace pyguard
