//! MLLM-as-a-judge harness: basic attribute scoring, pairwise comparison
//! with dual evaluation, corpus-level scores, and judge-human alignment
//! metrics. All score arithmetic is exact rational arithmetic.

use crate::error::{Error, Result};
use crate::gateway::{ChatClient, ChatMessage, ChatRequest};
use crate::model::{aggregate_text, Handbook, Note, TagSet};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

pub type Rational = Ratio<i64>;

/// Serde helper: rationals travel as `[numerator, denominator]` pairs.
pub mod rat_serde {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        (*r.numer(), *r.denom()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let (n, den): (i64, i64) = Deserialize::deserialize(d)?;
        if den == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Rational::new(n, den))
    }
}

/// Three binary judge dimensions plus their sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicAttributeScore {
    pub truth: u8,
    pub coverage: u8,
    pub importance: u8,
    pub total: u8,
}

impl BasicAttributeScore {
    pub fn new(truth: u8, coverage: u8, importance: u8) -> Result<Self> {
        for (name, v) in [("Truth", truth), ("Coverage", coverage), ("Importance", importance)] {
            if v > 1 {
                return Err(Error::ValueOutOfDomain(format!("{name} = {v}, expected 0 or 1")));
            }
        }
        Ok(Self { truth, coverage, importance, total: truth + coverage + importance })
    }
}

/// The five-outcome comparison scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseLabel {
    MuchBetter, // A>>B
    Better,     // A>B
    Equal,      // A=B
    Worse,      // A<B
    MuchWorse,  // A<<B
}

impl PairwiseLabel {
    pub fn value(self) -> i64 {
        match self {
            PairwiseLabel::MuchBetter => 2,
            PairwiseLabel::Better => 1,
            PairwiseLabel::Equal => 0,
            PairwiseLabel::Worse => -1,
            PairwiseLabel::MuchWorse => -2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairwiseLabel::MuchBetter => "A>>B",
            PairwiseLabel::Better => "A>B",
            PairwiseLabel::Equal => "A=B",
            PairwiseLabel::Worse => "A<B",
            PairwiseLabel::MuchWorse => "A<<B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseVerdict {
    pub label: PairwiseLabel,
    pub value: i64,
}

impl From<PairwiseLabel> for PairwiseVerdict {
    fn from(label: PairwiseLabel) -> Self {
        Self { label, value: label.value() }
    }
}

/// Both passes of a position-swapped evaluation and their reconciliation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualEvalResult {
    pub forward: PairwiseVerdict,
    pub reversed_raw: PairwiseVerdict,
    pub reversed_oriented: i64,
    #[serde(with = "rat_serde")]
    pub combined: Rational,
}

impl DualEvalResult {
    pub fn new(forward: PairwiseVerdict, reversed_raw: PairwiseVerdict) -> Self {
        let reversed_oriented = -reversed_raw.value;
        let combined = Rational::new(forward.value + reversed_oriented, 2);
        Self { forward, reversed_raw, reversed_oriented, combined }
    }
}

/// One item of the human-labeled alignment reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HumanReference {
    pub item_id: String,
    #[serde(with = "rat_serde")]
    pub value: Rational,
}

fn task_details(note: &Note, handbook: &Handbook) -> String {
    format!(
        "Generate fine-grained tags for the following note, guided by the category handbook below. Each tag carries an importance score (1-5).\n\nOperational handbook for the {} category:\n{}\n\nNote content:\n{}",
        note.category,
        handbook.render(),
        aggregate_text(note)
    )
}

/// The basic-attribute scoring template.
pub fn render_bas_prompt(note: &Note, tags: &TagSet, handbook: &Handbook) -> String {
    format!(
        "Assume you are an expert in operating a short video and graphic content platform, adept at analyzing and evaluating note content. Now, your task is to score an answer for a note tag generation task based on the corresponding scoring criteria.\n\n\
[Step 1]: Understand the goal and requirements of the note tag generation task (provided in <Note Tag Task Details>).\n\n\
[Step 2]: Based on the task's goal and requirements, review the scoring criteria (provided in <Scoring Criteria>) and the corresponding task response (provided in <Task Response>). If there is no content in <Task Response>, the answer is an empty tag.\n\n\
[Step 3]: Evaluate the task response according to the task's goal and scoring criteria. Represent the score in JSON format, for example: {{'Truth': 1, 'Coverage': 0, 'Importance': 1}}.\n\n\
[Step 4]: Verify whether the above three steps have been correctly executed. If accurate, output only the score JSON without any additional information.\n\n\
Note Tag Task: {details}\n\n\
<Scoring Criteria>\n\
1. Truth: If the tag is empty, assign 1 point. If the tag is non-empty, evaluate whether the tag content aligns with the textual and visual content of the post, ensuring no fabrication or hallucination. Assign 1 point if all tags are accurate; otherwise, 0 points.\n\
2. Coverage: If the tag is empty, evaluate whether the empty tag aligns with the goal and requirements of the task provided in <Note Tag Task Details>. Assign 1 point if correct; otherwise, 0 points. If the tag is non-empty, determine whether all tags fit within the dimensions in the operational handbook outlined in <Note Tag Task Details>. Assign 1 point if they do; otherwise, 0 points. Note that the evaluation of coverage is independent of authenticity. Even if the tag includes fabricated or hallucinatory content, it can still score 1 for coverage if it meets the criteria.\n\
3. Importance: If the tag is empty, assign 0 points. If the tag is non-empty, determine whether the tag content reflects prioritization based on the post content. If the post is content-oriented, the number of tags describing the content should not be fewer than those describing the product; if product-oriented, the number of tags describing the product should not be fewer than those describing the content. Assign 1 point if the condition is met; otherwise, 0 points.\n\n\
Tags: {tags}",
        details = task_details(note, handbook),
        tags = tags.to_json(),
    )
}

/// The pairwise comparison template. Verdicts always place A before B.
pub fn render_pairwise_prompt(note: &Note, handbook: &Handbook, a: &TagSet, b: &TagSet) -> String {
    format!(
        "Assume you are an expert in operating a short video and graphic content platform, proficient in analyzing and evaluating note content. You are tasked with comparing the quality of two responses, A and B, for a note tag generation task and providing the judgment result.\n\n\
[Step 1]: Understand the goal and requirements of the note tag generation task (provided in <Note Tag Task Details>).\n\n\
[Step 2]: Based on the task's goal and requirements, compare the quality of responses A and B (provided in <Task Responses>).\n\
The comparison result must be one of the following five outcomes: {{A>>B, A>B, A=B, A<B, A<<B}} (representing A is far better than, better than, roughly equal to, worse than, or far worse than B in quality, respectively).\n\
Note that the result must place A before B, such as \"B>A\" is not acceptable.\n\n\
[Step 3]: Verify whether the execution of the first two steps is error-free. If correct, output the final result without any additional information.\n\n\
Note Tag Task: {details}\n\
Criteria: prefer tag sets that are truthful, cover the handbook dimensions, and prioritize the core content of the note.\n\n\
<Task Response>\n\
A: {a}    B: {b}",
        details = task_details(note, handbook),
        a = a.to_json(),
        b = b.to_json(),
    )
}

fn parse_bas_json(raw: &str) -> Result<BasicAttributeScore> {
    let trimmed = raw.trim();
    // judge models tend to emit the single-quoted example form
    let candidate = trimmed.replace('\'', "\"");
    let v: serde_json::Value = serde_json::from_str(&candidate)
        .map_err(|e| Error::MalformedResponse(format!("invalid score JSON: {e}")))?;
    let field = |name: &str| -> Result<u8> {
        let raw = v[name]
            .as_i64()
            .ok_or_else(|| Error::MalformedResponse(format!("missing integer field {name}")))?;
        if raw != 0 && raw != 1 {
            return Err(Error::ValueOutOfDomain(format!("{name} = {raw}, expected 0 or 1")));
        }
        Ok(raw as u8)
    };
    BasicAttributeScore::new(field("Truth")?, field("Coverage")?, field("Importance")?)
}

fn parse_pairwise_label(raw: &str) -> Result<PairwiseVerdict> {
    let text = raw.trim();
    // longest labels first so "A>>B" is not read as "A>B"
    const LABELS: [(&str, PairwiseLabel); 5] = [
        ("A>>B", PairwiseLabel::MuchBetter),
        ("A<<B", PairwiseLabel::MuchWorse),
        ("A>B", PairwiseLabel::Better),
        ("A<B", PairwiseLabel::Worse),
        ("A=B", PairwiseLabel::Equal),
    ];
    for (pat, label) in LABELS {
        if text.contains(pat) {
            return Ok(label.into());
        }
    }
    Err(Error::MalformedResponse(format!(
        "not one of the five pairwise outcomes: {text:?}"
    )))
}

/// Scores one tag set on the three binary dimensions.
pub fn score_basic(
    note: &Note,
    tags: &TagSet,
    handbook: &Handbook,
    client: &dyn ChatClient,
    model: &str,
) -> Result<BasicAttributeScore> {
    if tags.note_id != note.id {
        return Err(Error::InvalidInput(format!(
            "tag set references note {} but scoring note {}",
            tags.note_id, note.id
        )));
    }
    let prompt = render_bas_prompt(note, tags, handbook);
    let request = ChatRequest::new(model, vec![ChatMessage::user(prompt)]);
    let completion = client.complete(&request)?;
    parse_bas_json(&completion.text)
}

/// One directed comparison: A first, B second.
pub fn compare_pairwise(
    note: &Note,
    handbook: &Handbook,
    a: &TagSet,
    b: &TagSet,
    client: &dyn ChatClient,
    model: &str,
) -> Result<PairwiseVerdict> {
    if a.note_id != note.id || b.note_id != note.id {
        return Err(Error::InvalidInput(format!(
            "both tag sets must reference note {}",
            note.id
        )));
    }
    let prompt = render_pairwise_prompt(note, handbook, a, b);
    let request = ChatRequest::new(model, vec![ChatMessage::user(prompt)]);
    let completion = client.complete(&request)?;
    parse_pairwise_label(&completion.text)
}

/// Judges (a, b) twice with positions swapped, orients the reversed verdict
/// by negation, and averages the two passes.
pub fn dual_evaluate(
    note: &Note,
    handbook: &Handbook,
    a: &TagSet,
    b: &TagSet,
    client: &dyn ChatClient,
    model: &str,
) -> Result<DualEvalResult> {
    let forward = compare_pairwise(note, handbook, a, b, client, model)?;
    let reversed_raw = compare_pairwise(note, handbook, b, a, client, model)?;
    Ok(DualEvalResult::new(forward, reversed_raw))
}

/// Mean of combined pairwise values.
pub fn pairwise_score(results: &[Rational]) -> Result<Rational> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: Rational = results.iter().sum();
    Ok(sum / Rational::from_integer(results.len() as i64))
}

/// Mean absolute error between judge outputs and reference values.
pub fn mae(judge: &[Rational], reference: &[Rational]) -> Result<Rational> {
    check_aligned(judge, reference)?;
    let sum: Rational = judge
        .iter()
        .zip(reference)
        .map(|(j, p)| abs(*j - *p))
        .sum();
    Ok(sum / Rational::from_integer(judge.len() as i64))
}

/// Fraction of items where |judge - reference| <= 1.
pub fn consistency(judge: &[Rational], reference: &[Rational]) -> Result<Rational> {
    check_aligned(judge, reference)?;
    let hits = judge
        .iter()
        .zip(reference)
        .filter(|(j, p)| abs(**j - **p) <= Rational::from_integer(1))
        .count();
    Ok(Rational::new(hits as i64, judge.len() as i64))
}

fn check_aligned(judge: &[Rational], reference: &[Rational]) -> Result<()> {
    if judge.len() != reference.len() {
        return Err(Error::LengthMismatch { left: judge.len(), right: reference.len() });
    }
    if judge.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

fn abs(r: Rational) -> Rational {
    if r < Rational::from_integer(0) {
        -r
    } else {
        r
    }
}

/// One judged item carrying the model it came from, for alignment reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentItem {
    pub item_id: String,
    pub model: String,
    #[serde(with = "rat_serde")]
    pub value: Rational,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentRow {
    pub model: String,
    #[serde(with = "rat_serde")]
    pub mae: Rational,
    #[serde(with = "rat_serde")]
    pub consistency: Rational,
    pub n: usize,
}

/// Joins judge outputs with human labels by item id and reports MAE and
/// Consistency per model plus a total row.
pub fn alignment_report(
    judged: &[AlignmentItem],
    human: &[HumanReference],
) -> Result<Vec<AlignmentRow>> {
    if judged.is_empty() || human.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lookup: std::collections::HashMap<&str, Rational> =
        human.iter().map(|h| (h.item_id.as_str(), h.value)).collect();

    let mut models: Vec<String> = Vec::new();
    for item in judged {
        if !models.contains(&item.model) {
            models.push(item.model.clone());
        }
    }

    let mut rows = Vec::new();
    let mut all_j = Vec::new();
    let mut all_p = Vec::new();
    for model in &models {
        let mut j = Vec::new();
        let mut p = Vec::new();
        for item in judged.iter().filter(|i| &i.model == model) {
            let reference = lookup.get(item.item_id.as_str()).ok_or_else(|| {
                Error::InvalidInput(format!("no human label for item {}", item.item_id))
            })?;
            j.push(item.value);
            p.push(*reference);
        }
        rows.push(AlignmentRow {
            model: model.clone(),
            mae: mae(&j, &p)?,
            consistency: consistency(&j, &p)?,
            n: j.len(),
        });
        all_j.extend(j);
        all_p.extend(p);
    }
    rows.push(AlignmentRow {
        model: "total".into(),
        mae: mae(&all_j, &all_p)?,
        consistency: consistency(&all_j, &all_p)?,
        n: all_j.len(),
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockClient;
    use crate::model::{Handbook, HandbookDimension, HandbookProvenance, Tag};

    fn handbook() -> Handbook {
        Handbook::new(
            "dressing".into(),
            vec![HandbookDimension { name: "Style".into(), guidance: String::new() }],
            HandbookProvenance::ExpertRefined,
        )
        .unwrap()
    }

    fn note() -> Note {
        Note {
            id: "n1".into(),
            category: "dressing".into(),
            title: "t".into(),
            body: "b".into(),
            product_desc: String::new(),
            asr_transcript: String::new(),
            image_refs: vec![],
            frame_refs: vec![],
        }
    }

    fn tagset(id: &str, texts: &[(&str, i64)]) -> TagSet {
        TagSet::new(
            id,
            texts.iter().map(|(t, i)| Tag::new(t, *i).unwrap()).collect(),
        )
    }

    fn mock_bas(note: &Note, tags: &TagSet, hb: &Handbook, reply: &str) -> MockClient {
        let request = ChatRequest::new(
            "judge",
            vec![ChatMessage::user(render_bas_prompt(note, tags, hb))],
        );
        let mut mock = MockClient::new();
        mock.record(&request, reply);
        mock
    }

    #[test]
    fn bas_parses_single_quoted_json() {
        let (n, hb) = (note(), handbook());
        let tags = tagset("n1", &[("wool coat", 5)]);
        let mock = mock_bas(&n, &tags, &hb, "{'Truth': 1, 'Coverage': 0, 'Importance': 1}");
        let score = score_basic(&n, &tags, &hb, &mock, "judge").unwrap();
        assert_eq!(score.total, 2);
        assert_eq!((score.truth, score.coverage, score.importance), (1, 0, 1));
    }

    #[test]
    fn bas_total_is_sum() {
        let (n, hb) = (note(), handbook());
        let tags = tagset("n1", &[("wool coat", 5)]);
        let mock = mock_bas(&n, &tags, &hb, r#"{"Truth":1,"Coverage":1,"Importance":1}"#);
        assert_eq!(score_basic(&n, &tags, &hb, &mock, "judge").unwrap().total, 3);
    }

    #[test]
    fn bas_rejects_out_of_domain() {
        let (n, hb) = (note(), handbook());
        let tags = tagset("n1", &[("wool coat", 5)]);
        let mock = mock_bas(&n, &tags, &hb, r#"{"Truth":2,"Coverage":0,"Importance":0}"#);
        assert!(matches!(
            score_basic(&n, &tags, &hb, &mock, "judge"),
            Err(Error::ValueOutOfDomain(_))
        ));
    }

    #[test]
    fn pairwise_label_mapping() {
        assert_eq!(parse_pairwise_label("A>B").unwrap().value, 1);
        assert_eq!(parse_pairwise_label("A<<B").unwrap().value, -2);
        assert_eq!(parse_pairwise_label("A>>B").unwrap().value, 2);
        assert_eq!(parse_pairwise_label(" A=B ").unwrap().value, 0);
        assert!(matches!(parse_pairwise_label("B>A"), Err(Error::MalformedResponse(_))));
    }

    #[test]
    fn dual_eval_arithmetic() {
        // consistent judge: forward +1, reversed raw -1 -> combined +1
        let r = DualEvalResult::new(PairwiseLabel::Better.into(), PairwiseLabel::Worse.into());
        assert_eq!(r.combined, Rational::from_integer(1));
        // position-biased judge: +1 both ways -> cancels to 0
        let r = DualEvalResult::new(PairwiseLabel::Better.into(), PairwiseLabel::Better.into());
        assert_eq!(r.combined, Rational::from_integer(0));
        // forward +2, reversed raw 0 -> (2 + 0) / 2 = +1
        let r = DualEvalResult::new(PairwiseLabel::MuchBetter.into(), PairwiseLabel::Equal.into());
        assert_eq!(r.combined, Rational::from_integer(1));
        assert_eq!(r.reversed_oriented, 0);
    }

    #[test]
    fn pairwise_score_mean() {
        let vals: Vec<Rational> = [-2, -2, 0].iter().map(|v| Rational::from_integer(*v)).collect();
        assert_eq!(pairwise_score(&vals).unwrap(), Rational::new(-4, 3));
        let zeros = vec![Rational::from_integer(0); 5];
        assert_eq!(pairwise_score(&zeros).unwrap(), Rational::from_integer(0));
        assert!(matches!(pairwise_score(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn mae_and_consistency() {
        let j: Vec<Rational> = [1, 0].iter().map(|v| Rational::from_integer(*v)).collect();
        let p: Vec<Rational> = [1, 1].iter().map(|v| Rational::from_integer(*v)).collect();
        assert_eq!(mae(&j, &p).unwrap(), Rational::new(1, 2));
        assert_eq!(mae(&j, &j).unwrap(), Rational::from_integer(0));

        // hand-computed: |3 - 5/2| + |0 - 1/2| + |2 - 2| = 1/2 + 1/2 + 0 = 1; /3
        let j3: Vec<Rational> = [3, 0, 2].iter().map(|v| Rational::from_integer(*v)).collect();
        let p3 = vec![Rational::new(5, 2), Rational::new(1, 2), Rational::from_integer(2)];
        assert_eq!(mae(&j3, &p3).unwrap(), Rational::new(1, 3));

        // |diff| exactly 1 counts as consistent
        let j = vec![Rational::from_integer(2), Rational::from_integer(0)];
        let p = vec![Rational::from_integer(1), Rational::from_integer(0)];
        assert_eq!(consistency(&j, &p).unwrap(), Rational::from_integer(1));
        let p = vec![Rational::from_integer(0), Rational::from_integer(0)];
        assert_eq!(consistency(&j, &p).unwrap(), Rational::new(1, 2));
        assert_eq!(consistency(&j, &j).unwrap(), Rational::from_integer(1));

        assert!(matches!(
            mae(&j, &[Rational::from_integer(0)]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn dual_evaluate_via_mock() {
        let (n, hb) = (note(), handbook());
        let a = tagset("n1", &[("wool coat", 5)]);
        let b = tagset("n1", &[("coat", 3)]);
        let mut mock = MockClient::new();
        let fwd = ChatRequest::new(
            "judge",
            vec![ChatMessage::user(render_pairwise_prompt(&n, &hb, &a, &b))],
        );
        let rev = ChatRequest::new(
            "judge",
            vec![ChatMessage::user(render_pairwise_prompt(&n, &hb, &b, &a))],
        );
        mock.record(&fwd, "A>B");
        mock.record(&rev, "A<B");
        let r = dual_evaluate(&n, &hb, &a, &b, &mock, "judge").unwrap();
        assert_eq!(r.combined, Rational::from_integer(1));
    }

    #[test]
    fn alignment_report_rows() {
        let judged = vec![
            AlignmentItem { item_id: "i1".into(), model: "m1".into(), value: Rational::from_integer(3) },
            AlignmentItem { item_id: "i2".into(), model: "m1".into(), value: Rational::from_integer(1) },
            AlignmentItem { item_id: "i1".into(), model: "m2".into(), value: Rational::from_integer(2) },
        ];
        let human = vec![
            HumanReference { item_id: "i1".into(), value: Rational::new(5, 2) },
            HumanReference { item_id: "i2".into(), value: Rational::from_integer(1) },
        ];
        let rows = alignment_report(&judged, &human).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].model, "m1");
        assert_eq!(rows[0].mae, Rational::new(1, 4));
        assert_eq!(rows[2].model, "total");
        assert_eq!(rows[2].n, 3);
    }
}
