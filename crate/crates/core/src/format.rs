//! Serializer and parser for the MM-CoT sample text format.
//!
//! One sample renders as a grounding block, a reasoning block, and an answer
//! block, in that fixed order:
//!
//! ```text
//! <loc> {description} refer to <vrt_0>, <vrt_1>
//! {description} refer to <vrt_7> </loc>
//! <think> {reasoning} </think>
//! <answer> {answer} </answer>
//! ```
//!
//! Serialization is byte-deterministic; parsing is strict on structure (tag
//! order, ascending VRT indices) but tolerates extra whitespace between tags.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::geometry::OrderedVrtSequence;

/// The six structural tags, in the order they must appear.
pub const TAGS: [&str; 6] = ["<loc>", "</loc>", "<think>", "</think>", "<answer>", "</answer>"];

/// Strings that may not occur inside any free-text field: the structural
/// tags, the special markers used by the token layer, and the VRT token
/// prefix (VRT tokens belong to the grounding block only).
pub const RESERVED_STRINGS: [&str; 10] = [
    "<loc>",
    "</loc>",
    "<think>",
    "</think>",
    "<answer>",
    "</answer>",
    "<bos>",
    "<eos>",
    "<unk>",
    "<vrt_",
];

const REFER_SEP: &str = " refer to ";

/// The six spatial-reasoning tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    Yaw,
    Pixel,
    Depth,
    Distance,
    LeftRight,
    FrontBehind,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Yaw,
        TaskKind::Pixel,
        TaskKind::Depth,
        TaskKind::Distance,
        TaskKind::LeftRight,
        TaskKind::FrontBehind,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Yaw => "yaw",
            TaskKind::Pixel => "pixel",
            TaskKind::Depth => "depth",
            TaskKind::Distance => "distance",
            TaskKind::LeftRight => "left_right",
            TaskKind::FrontBehind => "front_behind",
        }
    }

    pub fn parse_name(name: &str) -> Option<TaskKind> {
        TaskKind::ALL.iter().copied().find(|t| t.as_str() == name)
    }
}

impl core::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Validation failures when constructing samples or groundings.
#[derive(Debug, Clone, PartialEq)]
pub enum FormatError {
    /// A reserved string occurs inside a free-text field.
    Reserved { field: &'static str, needle: String },
    /// A required text field is empty (after trimming).
    Empty { field: &'static str },
    /// A text field carries leading or trailing whitespace.
    Padded { field: &'static str },
    /// Newlines are not allowed in this field (they delimit objects).
    NewlineForbidden { field: &'static str },
    /// A grounded sample needs at least one object.
    NoObjects,
    /// An object grounding needs at least one VRT.
    EmptyVrts,
}

impl core::fmt::Display for FormatError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FormatError::Reserved { field, needle } => {
                write!(f, "field '{field}' contains reserved string '{needle}'")
            }
            FormatError::Empty { field } => write!(f, "field '{field}' is empty"),
            FormatError::Padded { field } => {
                write!(f, "field '{field}' has leading or trailing whitespace")
            }
            FormatError::NewlineForbidden { field } => {
                write!(f, "field '{field}' may not contain newlines")
            }
            FormatError::NoObjects => write!(f, "sample has no object groundings"),
            FormatError::EmptyVrts => write!(f, "object grounding has no VRTs"),
        }
    }
}

impl core::error::Error for FormatError {}

fn validate_text(field: &'static str, value: &str, allow_newline: bool) -> Result<(), FormatError> {
    if value.trim().is_empty() {
        return Err(FormatError::Empty { field });
    }
    if value != value.trim() {
        return Err(FormatError::Padded { field });
    }
    if !allow_newline && (value.contains('\n') || value.contains('\r')) {
        return Err(FormatError::NewlineForbidden { field });
    }
    for needle in RESERVED_STRINGS {
        if value.contains(needle) {
            return Err(FormatError::Reserved {
                field,
                needle: needle.to_string(),
            });
        }
    }
    Ok(())
}

/// One referred object: its brief description and its ordered VRT sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectGrounding {
    description: String,
    vrts: OrderedVrtSequence,
}

impl ObjectGrounding {
    pub fn new(description: String, vrts: OrderedVrtSequence) -> Result<Self, FormatError> {
        validate_text("description", &description, false)?;
        if vrts.is_empty() {
            return Err(FormatError::EmptyVrts);
        }
        Ok(ObjectGrounding { description, vrts })
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn vrts(&self) -> &OrderedVrtSequence {
        &self.vrts
    }
}

/// Structured body of one sample as recovered by [`parse`]: everything the
/// text format itself carries. Identity fields (sample id, image reference,
/// task) and the query travel outside the text and are supplied by the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedBody {
    pub objects: Vec<ObjectGrounding>,
    pub think: String,
    pub answer: String,
}

/// One training/eval record: query, per-object groundings, reasoning text,
/// answer text. Immutable after construction; constructors enforce all
/// format invariants so serialization cannot fail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MMCoTSample {
    sample_id: String,
    image_ref: String,
    query: String,
    objects: Vec<ObjectGrounding>,
    think: String,
    answer: String,
    task: TaskKind,
}

impl MMCoTSample {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sample_id: String,
        image_ref: String,
        query: String,
        task: TaskKind,
        objects: Vec<ObjectGrounding>,
        think: String,
        answer: String,
    ) -> Result<Self, FormatError> {
        if objects.is_empty() {
            return Err(FormatError::NoObjects);
        }
        validate_text("query", &query, false)?;
        validate_text("think", &think, true)?;
        validate_text("answer", &answer, true)?;
        Ok(MMCoTSample {
            sample_id,
            image_ref,
            query,
            objects,
            think,
            answer,
            task,
        })
    }

    /// Rebuilds a full sample from a parsed body plus the caller-supplied
    /// identity fields.
    pub fn from_parsed(
        sample_id: String,
        image_ref: String,
        query: String,
        task: TaskKind,
        body: ParsedBody,
    ) -> Result<Self, FormatError> {
        MMCoTSample::new(
            sample_id,
            image_ref,
            query,
            task,
            body.objects,
            body.think,
            body.answer,
        )
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn image_ref(&self) -> &str {
        &self.image_ref
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn objects(&self) -> &[ObjectGrounding] {
        &self.objects
    }

    pub fn think(&self) -> &str {
        &self.think
    }

    pub fn answer(&self) -> &str {
        &self.answer
    }

    pub fn body(&self) -> ParsedBody {
        ParsedBody {
            objects: self.objects.clone(),
            think: self.think.clone(),
            answer: self.answer.clone(),
        }
    }

    /// Canonical text form. Byte-identical output for identical input.
    pub fn serialize(&self) -> String {
        let mut out = String::from("<loc> ");
        for (i, obj) in self.objects.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&obj.description);
            out.push_str(REFER_SEP);
            for (j, idx) in obj.vrts.indices().iter().enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                out.push_str(&format!("<vrt_{idx}>"));
            }
        }
        out.push_str(" </loc>\n<think> ");
        out.push_str(&self.think);
        out.push_str(" </think>\n<answer> ");
        out.push_str(&self.answer);
        out.push_str(" </answer>");
        out
    }

    /// Text-only variant: reasoning and answer blocks without the grounding
    /// block, for plain-CoT ablations.
    pub fn strip_to_plain_cot(&self) -> String {
        let mut out = String::from("<think> ");
        out.push_str(&self.think);
        out.push_str(" </think>\n<answer> ");
        out.push_str(&self.answer);
        out.push_str(" </answer>");
        out
    }
}

/// Parse failure categories.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    MissingTag(&'static str),
    DuplicateTag(&'static str),
    /// Tags present but not in loc -> think -> answer order.
    TagOrder(&'static str),
    /// Non-whitespace content outside the tag blocks.
    StrayText,
    /// Grounding line without a ` refer to ` separator.
    MissingReferSeparator,
    /// VRT token malformed or its payload is not a decimal index.
    BadVrtToken(String),
    /// VRT indices within one object are not strictly ascending.
    VrtOrder,
    /// A recovered field violates a content invariant.
    Field(FormatError),
}

/// Parse failure with the byte offset of the offending element.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl core::fmt::Display for ParseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "parse error at byte {}: ", self.offset)?;
        match &self.kind {
            ParseErrorKind::MissingTag(tag) => write!(f, "missing tag {tag}"),
            ParseErrorKind::DuplicateTag(tag) => write!(f, "duplicate tag {tag}"),
            ParseErrorKind::TagOrder(tag) => write!(f, "tag order violation at {tag}"),
            ParseErrorKind::StrayText => write!(f, "stray text outside tag blocks"),
            ParseErrorKind::MissingReferSeparator => {
                write!(f, "grounding line has no ' refer to ' separator")
            }
            ParseErrorKind::BadVrtToken(tok) => write!(f, "malformed VRT token '{tok}'"),
            ParseErrorKind::VrtOrder => write!(f, "VRT order violation"),
            ParseErrorKind::Field(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ParseError {}

fn err(offset: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { offset, kind }
}

/// Parses one serialized sample. Inverse of [`MMCoTSample::serialize`] on its
/// image; whitespace between tags is tolerated on input.
pub fn parse(text: &str) -> Result<ParsedBody, ParseError> {
    let mut positions = [0usize; 6];
    for (i, tag) in TAGS.iter().enumerate() {
        let mut found = text.match_indices(tag);
        // "<loc>" never matches inside "</loc>"; the six tags are unambiguous.
        let first = found.next();
        match (first, found.next()) {
            (None, _) => return Err(err(text.len(), ParseErrorKind::MissingTag(tag))),
            (Some(_), Some((dup, _))) => return Err(err(dup, ParseErrorKind::DuplicateTag(tag))),
            (Some((pos, _)), None) => positions[i] = pos,
        }
    }
    for i in 1..6 {
        if positions[i] < positions[i - 1] {
            let bad = positions
                .iter()
                .enumerate()
                .skip(1)
                .find(|(j, p)| **p < positions[*j - 1])
                .map(|(j, _)| j)
                .unwrap_or(i);
            return Err(err(positions[bad], ParseErrorKind::TagOrder(TAGS[bad])));
        }
    }

    let outside = [
        (0, positions[0]),
        (positions[1] + TAGS[1].len(), positions[2]),
        (positions[3] + TAGS[3].len(), positions[4]),
        (positions[5] + TAGS[5].len(), text.len()),
    ];
    for (start, end) in outside {
        if let Some(rel) = text[start..end].find(|c: char| !c.is_whitespace()) {
            return Err(err(start + rel, ParseErrorKind::StrayText));
        }
    }

    let loc_start = positions[0] + TAGS[0].len();
    let objects = parse_loc_payload(text, loc_start, positions[1])?;
    if objects.is_empty() {
        return Err(err(loc_start, ParseErrorKind::Field(FormatError::NoObjects)));
    }

    let think = text[positions[2] + TAGS[2].len()..positions[3]].trim();
    validate_text("think", think, true)
        .map_err(|e| err(positions[2] + TAGS[2].len(), ParseErrorKind::Field(e)))?;
    let answer = text[positions[4] + TAGS[4].len()..positions[5]].trim();
    validate_text("answer", answer, true)
        .map_err(|e| err(positions[4] + TAGS[4].len(), ParseErrorKind::Field(e)))?;

    Ok(ParsedBody {
        objects,
        think: think.to_string(),
        answer: answer.to_string(),
    })
}

fn parse_loc_payload(
    text: &str,
    start: usize,
    end: usize,
) -> Result<Vec<ObjectGrounding>, ParseError> {
    let payload = &text[start..end];
    let mut objects = Vec::new();
    let mut line_start = 0usize;
    let bytes = payload.as_bytes();
    while line_start <= payload.len() {
        let line_end = bytes[line_start..]
            .iter()
            .position(|b| *b == b'\n')
            .map(|p| line_start + p)
            .unwrap_or(payload.len());
        let line = &payload[line_start..line_end];
        if !line.trim().is_empty() {
            objects.push(parse_object_line(line, start + line_start)?);
        }
        if line_end == payload.len() {
            break;
        }
        line_start = line_end + 1;
    }
    Ok(objects)
}

fn parse_object_line(line: &str, line_offset: usize) -> Result<ObjectGrounding, ParseError> {
    let sep = line
        .rfind(REFER_SEP)
        .ok_or_else(|| err(line_offset, ParseErrorKind::MissingReferSeparator))?;
    let description = line[..sep].trim();
    // Description invariants (reserved strings, non-empty) are re-checked by
    // the constructor below; map its failures to positioned parse errors.
    let list_start = sep + REFER_SEP.len();
    let mut indices = Vec::new();
    for item in line[list_start..].split(',') {
        let token = item.trim();
        let idx = parse_vrt_token(token)
            .ok_or_else(|| err(line_offset + list_start, ParseErrorKind::BadVrtToken(token.to_string())))?;
        indices.push(idx);
    }
    for i in 1..indices.len() {
        if indices[i] <= indices[i - 1] {
            return Err(err(line_offset + list_start, ParseErrorKind::VrtOrder));
        }
    }
    let seq = OrderedVrtSequence::from_ascending(indices)
        .map_err(|_| err(line_offset + list_start, ParseErrorKind::VrtOrder))?;
    ObjectGrounding::new(description.to_string(), seq)
        .map_err(|e| err(line_offset, ParseErrorKind::Field(e)))
}

/// `<vrt_N>` with a decimal index, or `None`.
pub fn parse_vrt_token(token: &str) -> Option<u32> {
    let payload = token.strip_prefix("<vrt_")?.strip_suffix('>')?;
    if payload.is_empty() || !payload.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    payload.parse::<u32>().ok()
}

/// Renders the VRT token for a patch index.
pub fn vrt_token(index: u32) -> String {
    format!("<vrt_{index}>")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrderedVrtSequence;
    use alloc::vec;

    fn seq(indices: &[u32]) -> OrderedVrtSequence {
        OrderedVrtSequence::from_ascending(indices.to_vec()).unwrap()
    }

    fn sample_one_object() -> MMCoTSample {
        MMCoTSample::new(
            "s1".into(),
            "img-001".into(),
            "where is the red car".into(),
            TaskKind::Pixel,
            vec![ObjectGrounding::new("the red car".into(), seq(&[0, 1])).unwrap()],
            "t".into(),
            "a".into(),
        )
        .unwrap()
    }

    #[test]
    fn serialize_matches_fixed_grammar() {
        let s = sample_one_object();
        assert_eq!(
            s.serialize(),
            "<loc> the red car refer to <vrt_0>, <vrt_1> </loc>\n<think> t </think>\n<answer> a </answer>"
        );
    }

    #[test]
    fn serialize_multi_object_uses_newline_separator() {
        let s = MMCoTSample::new(
            "s2".into(),
            "img".into(),
            "q".into(),
            TaskKind::Distance,
            vec![
                ObjectGrounding::new("first car".into(), seq(&[0, 1, 8, 9])).unwrap(),
                ObjectGrounding::new("second car".into(), seq(&[9, 10, 17, 18])).unwrap(),
            ],
            "compare them".into(),
            "first".into(),
        )
        .unwrap();
        let text = s.serialize();
        assert!(text.contains("<vrt_9> </loc>") || text.contains("<vrt_18> </loc>"));
        assert_eq!(
            text,
            "<loc> first car refer to <vrt_0>, <vrt_1>, <vrt_8>, <vrt_9>\nsecond car refer to <vrt_9>, <vrt_10>, <vrt_17>, <vrt_18> </loc>\n<think> compare them </think>\n<answer> first </answer>"
        );
    }

    #[test]
    fn construction_rejects_zero_objects() {
        let res = MMCoTSample::new(
            "s".into(),
            "i".into(),
            "q".into(),
            TaskKind::Yaw,
            vec![],
            "t".into(),
            "a".into(),
        );
        assert_eq!(res.unwrap_err(), FormatError::NoObjects);
    }

    #[test]
    fn construction_rejects_reserved_tag_in_answer() {
        let res = MMCoTSample::new(
            "s".into(),
            "i".into(),
            "q".into(),
            TaskKind::Yaw,
            vec![ObjectGrounding::new("car".into(), seq(&[3])).unwrap()],
            "t".into(),
            "oops </answer> injected".into(),
        );
        assert!(matches!(res, Err(FormatError::Reserved { field: "answer", .. })));
    }

    #[test]
    fn construction_rejects_vrt_text_outside_loc() {
        let res = ObjectGrounding::new("looks like <vrt_3> here".into(), seq(&[3]));
        assert!(matches!(res, Err(FormatError::Reserved { .. })));
        let res = MMCoTSample::new(
            "s".into(),
            "i".into(),
            "q".into(),
            TaskKind::Yaw,
            vec![ObjectGrounding::new("car".into(), seq(&[3])).unwrap()],
            "see <vrt_3>".into(),
            "a".into(),
        );
        assert!(matches!(res, Err(FormatError::Reserved { field: "think", .. })));
    }

    #[test]
    fn construction_rejects_empty_think() {
        let res = MMCoTSample::new(
            "s".into(),
            "i".into(),
            "q".into(),
            TaskKind::Yaw,
            vec![ObjectGrounding::new("car".into(), seq(&[3])).unwrap()],
            "  ".into(),
            "a".into(),
        );
        assert!(matches!(res, Err(FormatError::Empty { field: "think" })));
    }

    #[test]
    fn construction_rejects_empty_vrts() {
        assert_eq!(
            ObjectGrounding::new("car".into(), seq(&[])).unwrap_err(),
            FormatError::EmptyVrts
        );
    }

    #[test]
    fn parse_round_trips_serialize() {
        let s = sample_one_object();
        let body = parse(&s.serialize()).unwrap();
        assert_eq!(body, s.body());
    }

    #[test]
    fn parse_tolerates_whitespace_between_tags() {
        let text = "  <loc> car refer to <vrt_2> ,<vrt_5> </loc> \n\n <think>  deep thought </think>\n<answer> left  </answer>  ";
        let body = parse(text).unwrap();
        assert_eq!(body.objects[0].description(), "car");
        assert_eq!(body.objects[0].vrts().indices(), &[2, 5]);
        assert_eq!(body.think, "deep thought");
        assert_eq!(body.answer, "left");
    }

    #[test]
    fn parse_then_serialize_is_a_fixpoint() {
        let text = " <loc>  car refer to <vrt_2>,  <vrt_5>  </loc>\n<think> x </think>\n<answer> y </answer> ";
        let body = parse(text).unwrap();
        let canon = MMCoTSample::from_parsed(
            "s".into(),
            "i".into(),
            "q".into(),
            TaskKind::Yaw,
            body,
        )
        .unwrap()
        .serialize();
        let again = parse(&canon).unwrap();
        let canon2 = MMCoTSample::from_parsed("s".into(), "i".into(), "q".into(), TaskKind::Yaw, again)
            .unwrap()
            .serialize();
        assert_eq!(canon, canon2);
    }

    #[test]
    fn parse_rejects_loc_after_think() {
        let text = "<think> x </think><loc> a refer to <vrt_1> </loc><answer> y </answer>";
        let e = parse(text).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::TagOrder(_)), "{e:?}");
    }

    #[test]
    fn parse_rejects_descending_vrts() {
        let text = "<loc> a refer to <vrt_5>, <vrt_3> </loc>\n<think> t </think>\n<answer> x </answer>";
        let e = parse(text).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::VrtOrder);
    }

    #[test]
    fn parse_rejects_bad_vrt_payload() {
        for bad in ["<vrt_x>", "<vrt_>", "<vrt_1x>", "vrt_1", "<vrt_1"] {
            let text = format!("<loc> a refer to {bad} </loc>\n<think> t </think>\n<answer> x </answer>");
            let e = parse(&text).unwrap_err();
            assert!(
                matches!(e.kind, ParseErrorKind::BadVrtToken(_)),
                "{bad} -> {e:?}"
            );
        }
    }

    #[test]
    fn parse_accepts_leading_zero_index_as_noncanonical_input() {
        let text = "<loc> a refer to <vrt_007> </loc>\n<think> t </think>\n<answer> x </answer>";
        let body = parse(text).unwrap();
        assert_eq!(body.objects[0].vrts().indices(), &[7]);
    }

    #[test]
    fn parse_rejects_missing_and_duplicate_tags() {
        let e = parse("<loc> a refer to <vrt_1> </loc>\n<think> t </think>").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingTag("<answer>"));
        let text = "<loc> a refer to <vrt_1> </loc>\n<think> t </think>\n<answer> x </answer>\n<answer> z </answer>";
        let e = parse(text).unwrap_err();
        assert!(matches!(
            e.kind,
            ParseErrorKind::DuplicateTag("<answer>") | ParseErrorKind::DuplicateTag("</answer>")
        ));
    }

    #[test]
    fn parse_rejects_stray_text() {
        let text = "junk <loc> a refer to <vrt_1> </loc>\n<think> t </think>\n<answer> x </answer>";
        let e = parse(text).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::StrayText);
        assert_eq!(e.offset, 0);
    }

    #[test]
    fn parse_rejects_missing_refer_separator() {
        let text = "<loc> just a description </loc>\n<think> t </think>\n<answer> x </answer>";
        let e = parse(text).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingReferSeparator);
    }

    #[test]
    fn description_containing_refer_to_round_trips() {
        let s = MMCoTSample::new(
            "s".into(),
            "i".into(),
            "q".into(),
            TaskKind::Yaw,
            vec![ObjectGrounding::new(
                "the sign people refer to as old".into(),
                seq(&[4, 7]),
            )
            .unwrap()],
            "t".into(),
            "a".into(),
        )
        .unwrap();
        let body = parse(&s.serialize()).unwrap();
        assert_eq!(body.objects[0].description(), "the sign people refer to as old");
        assert_eq!(body.objects[0].vrts().indices(), &[4, 7]);
    }

    #[test]
    fn strip_to_plain_cot_has_no_loc_block() {
        let s = sample_one_object();
        let plain = s.strip_to_plain_cot();
        assert!(!plain.contains("<loc>"));
        assert_eq!(plain, "<think> t </think>\n<answer> a </answer>");
    }

    #[test]
    fn plain_cot_round_trips_through_a_block_parser() {
        // Independent think/answer extractor over the plain-CoT form.
        fn block<'a>(text: &'a str, open: &str, close: &str) -> &'a str {
            let start = text.find(open).unwrap() + open.len();
            let end = text.find(close).unwrap();
            text[start..end].trim()
        }
        let s = MMCoTSample::new(
            "s".into(),
            "i".into(),
            "q".into(),
            TaskKind::Depth,
            vec![ObjectGrounding::new("near truck".into(), seq(&[0, 63])).unwrap()],
            "it fills many cells, so it is close".into(),
            "near".into(),
        )
        .unwrap();
        let plain = s.strip_to_plain_cot();
        assert_eq!(block(&plain, "<think>", "</think>"), s.think());
        assert_eq!(block(&plain, "<answer>", "</answer>"), s.answer());
    }

    #[test]
    fn loc_block_vrt_pattern_accounting() {
        let s = MMCoTSample::new(
            "s".into(),
            "i".into(),
            "q".into(),
            TaskKind::Depth,
            vec![
                ObjectGrounding::new("near truck".into(), seq(&[0, 63])).unwrap(),
                ObjectGrounding::new("far truck".into(), seq(&[12])).unwrap(),
            ],
            "reason".into(),
            "near".into(),
        )
        .unwrap();
        let text = s.serialize();
        let loc_end = text.find("</loc>").unwrap();
        let loc_block = &text[..loc_end];
        let mut count = 0;
        let mut at = 0;
        while let Some(rel) = loc_block[at..].find("<vrt_") {
            let start = at + rel;
            let end = loc_block[start..].find('>').map(|p| start + p + 1).unwrap();
            assert!(parse_vrt_token(&loc_block[start..end]).is_some());
            count += 1;
            at = end;
        }
        assert_eq!(count, 3);
    }

    #[test]
    fn task_kind_names_round_trip() {
        for t in TaskKind::ALL {
            assert_eq!(TaskKind::parse_name(t.as_str()), Some(t));
        }
        assert_eq!(TaskKind::parse_name("bogus"), None);
    }
}
