//! Ordered-rule classifier mapping compiler errors to failure categories.
//!
//! Only `error:` lines are considered; warnings and notes never decide a
//! category. Rules are tried in order and the first rule that matches any
//! error line wins. Patterns are calibrated against GCC (and the common
//! Clang spellings where they differ).

use std::sync::LazyLock;

use regex::Regex;

use super::FailureCategory;

struct ErrorLine<'a> {
    line: Option<usize>,
    message: &'a str,
}

static LOCATED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[^:\s][^:]*):(\d+):(?:\d+:)?\s*(?:fatal )?error:\s*(.*)$").unwrap());
static UNDECLARED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"'([A-Za-z_]\w*)' (?:was not declared in this scope|has not been declared)|use of undeclared identifier '([A-Za-z_]\w*)'|is not a variable in clause").unwrap()
});

fn error_lines(diagnostics: &str) -> Vec<ErrorLine<'_>> {
    diagnostics
        .lines()
        .filter_map(|l| {
            if let Some(c) = LOCATED.captures(l) {
                return Some(ErrorLine {
                    line: c[1].parse().ok(),
                    message: c.get(2).unwrap().as_str(),
                });
            }
            l.find("error:").map(|i| ErrorLine {
                line: None,
                message: l[i + "error:".len()..].trim(),
            })
        })
        .collect()
}

fn is_omp_pragma(source: &str, line: Option<usize>) -> bool {
    line.and_then(|n| source.lines().nth(n.checked_sub(1)?))
        .map(|l| {
            let t = l.trim_start();
            t.starts_with('#') && t[1..].trim_start().starts_with("pragma") && t.contains("omp")
        })
        .unwrap_or(false)
}

type Matcher = fn(&ErrorLine<'_>, &str) -> bool;

/// Rule names in evaluation order, for documentation and reports.
pub const CLASSIFIER_RULES: &[(&str, FailureCategory)] = &[
    ("variable not specified in enclosing region under default(none)", FailureCategory::DefaultNoneViolation),
    ("reduction on a type without a declared reduction, or duplicated in data clauses", FailureCategory::InvalidReduction),
    ("invalid form or operator in an atomic construct", FailureCategory::AtomicMisuse),
    ("collapse over loops that are not perfectly nested", FailureCategory::CollapseMisuse),
    ("iterator without random access in a worksharing loop", FailureCategory::IteratorLimitation),
    ("removed or deprecated standard-library construct", FailureCategory::DeprecatedConstruct),
    ("undeclared identifier named in a pragma clause", FailureCategory::UndeclaredInClause),
    ("malformed pragma or loop form", FailureCategory::SyntaxError),
];

const MATCHERS: [Matcher; 8] = [
    |e, _| e.message.contains("not specified in enclosing") || e.message.contains("must have explicitly specified data sharing attributes"),
    |e, src| {
        let m = e.message;
        m.contains("user defined reduction not found")
            || m.contains("has invalid type for 'reduction'")
            || m.contains("list item of type")
            || m.contains("is not valid for type") && m.contains("reduction")
            || (m.contains("appears more than once in data clauses") || m.contains("appears more than once in the same clause"))
                && is_omp_pragma(src, e.line)
                && pragma_line(src, e.line).is_some_and(|l| l.contains("reduction"))
    },
    |e, _| {
        let m = e.message;
        m.contains("omp atomic") || m.contains("atomic' construct") || m.contains("expression for atomic")
    },
    |e, _| {
        let m = e.message;
        m.contains("not enough for loops to collapse")
            || m.contains("not enough perfectly nested loops")
            || m.contains("collapsed loops not perfectly nested")
    },
    |e, _| {
        let m = e.message;
        (m.contains("no match for 'operator-'") || m.contains("no match for 'operator<'") || m.contains("no match for 'operator+="))
            && m.contains("iterator")
            || m.contains("invalid type for iteration variable")
            || m.contains("random access iterator")
    },
    |e, _| {
        const NAMES: [&str; 12] = [
            "bind1st", "bind2nd", "binder1st", "binder2nd", "ptr_fun", "mem_fun", "auto_ptr",
            "random_shuffle", "unary_function", "binary_function", "'register' storage class",
            "dynamic exception specification",
        ];
        NAMES.iter().any(|n| e.message.contains(n))
    },
    |e, src| UNDECLARED.is_match(e.message) && is_omp_pragma(src, e.line),
    |e, src| {
        let m = e.message;
        (m.starts_with("expected") && (is_omp_pragma(src, e.line) || m.contains("iteration declaration")))
            || m.contains("invalid controlling predicate")
            || m.contains("invalid increment expression")
            || m.contains("expected iteration declaration")
            || m.contains("expected '#pragma omp")
            || m.contains("unmatched '#pragma")
    },
];

fn pragma_line(source: &str, line: Option<usize>) -> Option<&str> {
    line.and_then(|n| source.lines().nth(n.checked_sub(1)?))
}

/// Maps a failed compilation to exactly one category; `OtherCompileError` when no rule fires.
pub fn classify_failure(diagnostics: &str, source: &str) -> FailureCategory {
    let errors = error_lines(diagnostics);
    for (i, matcher) in MATCHERS.iter().enumerate() {
        if errors.iter().any(|e| matcher(e, source)) {
            return CLASSIFIER_RULES[i].1;
        }
    }
    FailureCategory::OtherCompileError
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_none() {
        let d = "main.cc:7:42: error: 'scale' not specified in enclosing 'parallel'\n";
        assert_eq!(classify_failure(d, ""), FailureCategory::DefaultNoneViolation);
    }

    #[test]
    fn reductions() {
        let d = "main.cc:6:42: error: user defined reduction not found for 'C'\n";
        assert_eq!(classify_failure(d, ""), FailureCategory::InvalidReduction);
        let src = "int main(){\ndouble s;\n#pragma omp parallel for reduction(+:s) reduction(*:s)\n}";
        let d = "main.cc:3:59: error: 's' appears more than once in data clauses\n";
        assert_eq!(classify_failure(d, src), FailureCategory::InvalidReduction);
    }

    #[test]
    fn syntax_on_pragma_line() {
        let src = "int main(){\n#pragma omp parallel for reduction(+:sum\n}";
        let d = "main.cc:2:45: error: expected ')' before end of line\n";
        assert_eq!(classify_failure(d, src), FailureCategory::SyntaxError);
    }

    #[test]
    fn undeclared_only_counts_in_clauses() {
        let src = "int main(){\n#pragma omp parallel for private(j)\nfor(int i=0;i<3;++i) f(i);\n}";
        let d = "main.cc:2:38: error: 'j' has not been declared\n";
        assert_eq!(classify_failure(d, src), FailureCategory::UndeclaredInClause);
        let d = "main.cc:3:23: error: 'f' was not declared in this scope\n";
        assert_eq!(classify_failure(d, src), FailureCategory::OtherCompileError);
    }

    #[test]
    fn warnings_and_notes_ignored() {
        let d = "main.cc:3:10: warning: 'template<class _Operation> class std::binder2nd' is deprecated\n\
                 main.cc:9:1: note: declared here\n\
                 main.cc:12:3: error: 'q' was not declared in this scope\n";
        assert_eq!(classify_failure(d, ""), FailureCategory::OtherCompileError);
    }

    #[test]
    fn rule_order_prefers_collapse_over_follow_on_errors() {
        let src = "int main(){\n#pragma omp parallel for collapse(2)\nfor (int i = 0; i < 10; ++i) {}\n}";
        let d = "main.cc:3:9: error: not enough for loops to collapse\nmain.cc:2:11: error: 'i' was not declared in this scope\n";
        assert_eq!(classify_failure(d, src), FailureCategory::CollapseMisuse);
    }

    #[test]
    fn empty_is_fallthrough() {
        assert_eq!(classify_failure("", ""), FailureCategory::OtherCompileError);
        assert_eq!(classify_failure("ld: cannot find -lfoo\ncollect2: error: ld returned 1 exit status", ""), FailureCategory::OtherCompileError);
    }
}
