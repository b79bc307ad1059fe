//! Marked-attribute test sets: premise/hypothesis sentence pairs built from
//! (verb, object) templates.
//!
//! Every premise reads `A person <verb> <object>.`; the hypothesis swaps
//! `A person` for a gendered attribute word, a name, or an occupation.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::embedding::WordList;
use crate::error::{Error, Result};
use crate::Gender;

/// Premise count of the shipped template bank.
pub const EXPECTED_PREMISES: usize = 1968;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBank {
    pub verbs: WordList,
    /// `(object phrase, category)` in file order.
    pub objects: Vec<(String, String)>,
    /// Allowed objects per verb, in verb order.
    pub pairing: Vec<(String, Vec<String>)>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

impl TemplateBank {
    /// Parses the three bank files. Pairing lines are `verb<TAB>object` or
    /// `verb<TAB>@category`, the latter expanding to every object of that
    /// category. With `strict`, a premise count other than
    /// [`EXPECTED_PREMISES`] is an error rather than a warning.
    pub fn parse(verbs: (&str, &str), objects: (&str, &str), pairing: (&str, &str), strict: bool) -> Result<Self> {
        let verbs = WordList::new(
            "verbs",
            content_lines(verbs.1).map(|(_, l)| l.trim().to_owned()),
        );

        let (oname, otext) = objects;
        let mut object_list: Vec<(String, String)> = Vec::new();
        let mut seen = HashSet::new();
        for (line, l) in content_lines(otext) {
            let mut parts = l.split('\t');
            let obj = parts.next().unwrap_or_default().trim().to_owned();
            let cat = parts.next().unwrap_or_default().trim().to_owned();
            if !seen.insert(obj.clone()) {
                return Err(Error::parse(oname, line, format!("duplicate object '{obj}'")));
            }
            object_list.push((obj, cat));
        }

        let (pname, ptext) = pairing;
        let verb_set = verbs.to_set();
        let mut by_verb: HashMap<String, Vec<String>> = HashMap::new();
        for (line, l) in content_lines(ptext) {
            let (verb, target) = l
                .split_once('\t')
                .ok_or_else(|| Error::parse(pname, line, "expected verb<TAB>object"))?;
            let (verb, target) = (verb.trim(), target.trim());
            if !verb_set.contains(verb) {
                return Err(Error::parse(pname, line, format!("unknown verb '{verb}'")));
            }
            let targets: Vec<String> = if let Some(cat) = target.strip_prefix('@') {
                let objs: Vec<String> = object_list.iter().filter(|(_, c)| c == cat).map(|(o, _)| o.clone()).collect();
                if objs.is_empty() {
                    return Err(Error::parse(pname, line, format!("unknown object category '{cat}'")));
                }
                objs
            } else if seen.contains(target) {
                vec![target.to_owned()]
            } else {
                return Err(Error::parse(pname, line, format!("unknown object '{target}'")));
            };
            let entry = by_verb.entry(verb.to_owned()).or_default();
            for t in targets {
                if entry.contains(&t) {
                    return Err(Error::parse(pname, line, format!("pair '{verb} {t}' listed twice")));
                }
                entry.push(t);
            }
        }

        let pairing: Vec<(String, Vec<String>)> = verbs
            .words()
            .iter()
            .map(|v| (v.clone(), by_verb.remove(v).unwrap_or_default()))
            .collect();
        for (v, objs) in &pairing {
            if objs.is_empty() {
                warn!("verb '{v}' has no paired objects");
            }
        }
        let bank = TemplateBank {
            verbs,
            objects: object_list,
            pairing,
        };
        let n = bank.premise_count();
        if n != EXPECTED_PREMISES {
            let msg = format!("template bank yields {n} premises, expected {EXPECTED_PREMISES}");
            if strict {
                return Err(Error::InvalidArgument(msg));
            }
            warn!("{msg}");
        }
        info!(
            "template bank: {} verbs, {} objects, {n} premises",
            bank.verbs.len(),
            bank.objects.len()
        );
        Ok(bank)
    }

    pub fn load(verbs: &Path, objects: &Path, pairing: &Path, strict: bool) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let (v, o, p) = (read(verbs)?, read(objects)?, read(pairing)?);
        TemplateBank::parse(
            (&verbs.display().to_string(), &v),
            (&objects.display().to_string(), &o),
            (&pairing.display().to_string(), &p),
            strict,
        )
    }

    pub fn premise_count(&self) -> usize {
        self.pairing.iter().map(|(_, o)| o.len()).sum()
    }

    /// `(verb, object)` in verb order, then pairing order.
    pub fn premises(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairing
            .iter()
            .flat_map(|(v, objs)| objs.iter().map(move |o| (v.as_str(), o.as_str())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Explicit,
    Name,
    Occupation,
}

impl SetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SetKind::Explicit => "explicit",
            SetKind::Name => "name",
            SetKind::Occupation => "occupation",
        }
    }

    /// Whether the two groups must be the same size.
    pub fn requires_balance(self) -> bool {
        !matches!(self, SetKind::Occupation)
    }
}

impl fmt::Display for SetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(SetKind::Explicit),
            "name" | "names" => Ok(SetKind::Name),
            "occupation" | "occupations" => Ok(SetKind::Occupation),
            _ => Err(Error::InvalidArgument(format!("unknown test-set kind '{s}'"))),
        }
    }
}

/// An attribute word with its group and surface category
/// (`noun`, `pronoun`, `name`, `occupation`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeWord {
    pub word: String,
    pub group: Gender,
    pub category: String,
}

/// Parses `word<TAB>group<TAB>category` lines.
pub fn parse_attributes(name: &str, text: &str) -> Result<Vec<AttributeWord>> {
    let mut out: Vec<AttributeWord> = Vec::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split('\t').map(str::trim).collect();
        let word = fields[0];
        let group = match fields.get(1) {
            Some(g) if !g.is_empty() => g.parse::<Gender>().map_err(|e| Error::parse(name, line, e.to_string()))?,
            _ => return Err(Error::parse(name, line, format!("attribute word '{word}' has no group label"))),
        };
        let category = fields.get(2).copied().unwrap_or("").to_owned();
        if out.iter().any(|a| a.word == word) {
            return Err(Error::parse(name, line, format!("duplicate attribute word '{word}'")));
        }
        out.push(AttributeWord {
            word: word.to_owned(),
            group,
            category,
        });
    }
    Ok(out)
}

pub fn load_attributes(path: &Path) -> Result<Vec<AttributeWord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_attributes(&path.display().to_string(), &text)
}

/// Indefinite article choice: an exception table, else `an` before a vowel letter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Articles {
    exceptions: HashMap<String, String>,
}

impl Articles {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut exceptions = HashMap::new();
        for (line, l) in content_lines(text) {
            let (w, a) = l
                .split_once('\t')
                .ok_or_else(|| Error::parse(name, line, "expected word<TAB>article"))?;
            let a = a.trim().to_lowercase();
            if a != "a" && a != "an" {
                return Err(Error::parse(name, line, format!("article must be 'a' or 'an', got '{a}'")));
            }
            exceptions.insert(w.trim().to_lowercase(), a);
        }
        Ok(Articles { exceptions })
    }

    /// `"a"` or `"an"` for `word`.
    pub fn article(&self, word: &str) -> &str {
        let lower = word.to_lowercase();
        if let Some(a) = self.exceptions.get(&lower) {
            return a;
        }
        match lower.chars().next() {
            Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
            _ => "a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub group: Gender,
    pub attribute_word: String,
    pub set_kind: SetKind,
    pub word_category: String,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect()
}

/// Stable id for one sentence pair.
pub fn pair_id(kind: SetKind, word: &str, verb: &str, object: &str) -> String {
    format!("{}-{}-{}-{}", kind.as_str(), slug(word), slug(verb), slug(object))
}

pub fn premise(verb: &str, object: &str) -> String {
    format!("A person {verb} {object}.")
}

/// Hypothesis surface form. Pronouns and names take no article.
pub fn hypothesis(kind: SetKind, attr: &AttributeWord, verb: &str, object: &str, articles: &Articles) -> String {
    let bare = kind == SetKind::Name || attr.category == "pronoun" || attr.category == "name";
    let subject = if bare {
        attr.word.clone()
    } else {
        format!("{} {}", articles.article(&attr.word), attr.word)
    };
    capitalize(&format!("{subject} {verb} {object}."))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSet {
    pub kind: SetKind,
    pub pairs: Vec<SentencePair>,
}

/// Every premise crossed with every attribute word, premise-major.
pub fn generate(bank: &TemplateBank, kind: SetKind, attributes: &[AttributeWord], articles: &Articles) -> Result<TestSet> {
    if attributes.is_empty() {
        return Err(Error::Empty("no attribute words".into()));
    }
    if kind.requires_balance() {
        let m = attributes.iter().filter(|a| a.group == Gender::Male).count();
        let f = attributes.len() - m;
        if m != f {
            return Err(Error::InvalidArgument(format!(
                "{kind} test sets need equal group sizes, got {m} M and {f} F"
            )));
        }
    }
    let mut pairs = Vec::with_capacity(bank.premise_count() * attributes.len());
    let mut ids = HashSet::new();
    for (verb, object) in bank.premises() {
        let p = premise(verb, object);
        for a in attributes {
            let id = pair_id(kind, &a.word, verb, object);
            if !ids.insert(id.clone()) {
                return Err(Error::InvalidArgument(format!("pair id '{id}' is not unique")));
            }
            pairs.push(SentencePair {
                id,
                premise: p.clone(),
                hypothesis: hypothesis(kind, a, verb, object, articles),
                group: a.group,
                attribute_word: a.word.clone(),
                set_kind: kind,
                word_category: a.category.clone(),
            });
        }
    }
    Ok(TestSet { kind, pairs })
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, g: Gender) -> usize {
        self.pairs.iter().filter(|p| p.group == g).count()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        for p in &self.pairs {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        }
        out.flush().map_err(|e| Error::io("<output>", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_jsonl(f)
    }

    pub fn read_jsonl<R: BufRead>(reader: R, name: &str) -> Result<Self> {
        let mut pairs: Vec<SentencePair> = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(name, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let p: SentencePair = serde_json::from_str(&line).map_err(|e| Error::parse(name, k + 1, e.to_string()))?;
            if let Some(first) = pairs.first() {
                if first.set_kind != p.set_kind {
                    return Err(Error::parse(name, k + 1, "mixed test-set kinds"));
                }
            }
            pairs.push(p);
        }
        let kind = pairs.first().map(|p| p.set_kind).ok_or_else(|| Error::Empty(format!("{name}: no records")))?;
        Ok(TestSet { kind, pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        TestSet::read_jsonl(BufReader::new(f), &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_bank() -> TemplateBank {
        TemplateBank::parse(
            ("v", "prepared\n"),
            ("o", "a meal\tfood\na salad\tfood\n"),
            ("p", "prepared\t@food\n"),
            false,
        )
        .unwrap()
    }

    fn he_she() -> Vec<AttributeWord> {
        parse_attributes("a", "He\tM\tpronoun\nShe\tF\tpronoun\n").unwrap()
    }

    #[test]
    fn one_verb_two_objects() {
        let bank = tiny_bank();
        assert_eq!(bank.premise_count(), 2);
        assert_eq!(bank.premises().collect::<Vec<_>>(), vec![("prepared", "a meal"), ("prepared", "a salad")]);
    }

    #[test]
    fn strict_count_check() {
        let err = TemplateBank::parse(("v", "ate\n"), ("o", "a pear\tfood\n"), ("p", "ate\ta pear\n"), true).unwrap_err();
        assert!(err.to_string().contains("1968"));
    }

    #[test]
    fn unknown_object_is_located() {
        let err = TemplateBank::parse(
            ("v", "ate\n"),
            ("o", "a pear\tfood\n"),
            ("pairs.tsv", "ate\ta pear\nate\ta plum\n"),
            false,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("pairs.tsv:2:"), "{err}");
    }

    #[test]
    fn pronoun_hypotheses() {
        let set = generate(&tiny_bank(), SetKind::Explicit, &he_she(), &Articles::default()).unwrap();
        let meal: Vec<&str> = set.pairs[..2].iter().map(|p| p.hypothesis.as_str()).collect();
        assert_eq!(meal, vec!["He prepared a meal.", "She prepared a meal."]);
        assert_eq!(set.pairs[0].premise, "A person prepared a meal.");
        assert_eq!(set.pairs[1].id, "explicit-She-prepared-a_meal");
    }

    #[test]
    fn articles_and_exceptions() {
        let arts = Articles::parse("x", "hour\tan\nuniform\ta\n").unwrap();
        assert_eq!(arts.article("engineer"), "an");
        assert_eq!(arts.article("nurse"), "a");
        assert_eq!(arts.article("hour"), "an");
        assert_eq!(arts.article("uniform"), "a");
        let occ = AttributeWord {
            word: "engineer".into(),
            group: Gender::Male,
            category: "occupation".into(),
        };
        assert_eq!(hypothesis(SetKind::Occupation, &occ, "ate", "a pear", &arts), "An engineer ate a pear.");
    }

    #[test]
    fn unbalanced_explicit_rejected() {
        let attrs = parse_attributes("a", "man\tM\tnoun\n").unwrap();
        assert!(generate(&tiny_bank(), SetKind::Explicit, &attrs, &Articles::default()).is_err());
    }

    #[test]
    fn unlabeled_word_rejected() {
        assert!(parse_attributes("a", "man\n").is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let set = generate(&tiny_bank(), SetKind::Explicit, &he_she(), &Articles::default()).unwrap();
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"id\":\"explicit-He-prepared-a_meal\",\"premise\""));
        assert_eq!(TestSet::read_jsonl(&buf[..], "x").unwrap(), set);
    }
}
