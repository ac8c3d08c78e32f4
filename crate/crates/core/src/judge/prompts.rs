//! Prompt templates and placeholder substitution. The templates live as
//! versioned text assets; rendering is byte-stable given identical inputs
//! so judge runs reproduce up to endpoint nondeterminism.

use crate::pool::Question;

pub const CATEGORIZE_BATCH_TEMPLATE: &str = include_str!("templates/categorize_batch.txt");
pub const CATEGORIZE_SINGLE_TEMPLATE: &str = include_str!("templates/categorize_single.txt");
pub const SELECT_QUESTION_TEMPLATE: &str = include_str!("templates/select_question.txt");

/// The repeated per-question block shared by all three templates.
const QUESTION_BLOCK: &str = "Question ID: # Question ID\nDifficulty: # Difficulty\nContent: # Content\n# IAMAG\nOptions: # Options\n...";

/// Marker substituted for an attached image; the actual pixels ride along
/// as separate message parts in candidate order.
const IMAGE_MARKER: &str = "Image: [attached]";

/// A question rendered for a prompt: its text block plus any image
/// reference to attach.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedQuestion {
    pub block: String,
    pub image_ref: Option<String>,
}

fn render_options(question: &Question) -> String {
    match &question.options {
        None => "N/A".to_string(),
        Some(options) if options.is_empty() => "N/A".to_string(),
        Some(options) => options
            .iter()
            .map(|o| format!("{}. {}", o.label, o.text))
            .collect::<Vec<_>>()
            .join(" | "),
    }
}

/// Instantiate the per-question block. When `include_images` is false the
/// image line disappears entirely (the text-only ablation), and nothing is
/// attached.
pub fn render_question(
    question: &Question,
    difficulty: f64,
    include_images: bool,
) -> RenderedQuestion {
    let attach = if include_images {
        question.image_ref.clone()
    } else {
        None
    };
    let image_line = if attach.is_some() {
        Some(IMAGE_MARKER)
    } else {
        None
    };
    let mut block = String::new();
    block.push_str(&format!("Question ID: {}\n", question.id));
    block.push_str(&format!("Difficulty: {difficulty:.2}\n"));
    block.push_str(&format!("Content: {}\n", question.text));
    if let Some(line) = image_line {
        block.push_str(line);
        block.push('\n');
    }
    block.push_str(&format!("Options: {}", render_options(question)));
    RenderedQuestion {
        block,
        image_ref: attach,
    }
}

/// Replace the template's repeated question block with one instantiation
/// per question, returning the text plus image refs in attachment order.
fn expand_question_blocks(
    template: &str,
    questions: &[(&Question, f64)],
    include_images: bool,
) -> (String, Vec<String>) {
    let rendered: Vec<RenderedQuestion> = questions
        .iter()
        .map(|&(q, d)| render_question(q, d, include_images))
        .collect();
    let images: Vec<String> = rendered
        .iter()
        .filter_map(|r| r.image_ref.clone())
        .collect();
    let joined = rendered
        .iter()
        .map(|r| r.block.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    (template.replacen(QUESTION_BLOCK, &joined, 1), images)
}

/// Prompt 1: batch categorization of the initial questions.
pub fn render_categorize_batch(
    questions: &[(&Question, f64)],
    include_images: bool,
) -> (String, Vec<String>) {
    expand_question_blocks(CATEGORIZE_BATCH_TEMPLATE, questions, include_images)
}

/// Prompt 2: single-question categorization against the existing list.
pub fn render_categorize_single(
    question: &Question,
    difficulty: f64,
    existing_categories: &[String],
    include_images: bool,
) -> (String, Vec<String>) {
    let (text, images) = expand_question_blocks(
        CATEGORIZE_SINGLE_TEMPLATE,
        &[(question, difficulty)],
        include_images,
    );
    let list = existing_categories.join(", ");
    (text.replacen("# Category", &list, 1), images)
}

/// Prompt 3: next-question selection over the candidate set.
pub fn render_select_question(
    memory_markdown: &str,
    ability: f64,
    candidates: &[(&Question, f64)],
    include_images: bool,
) -> (String, Vec<String>) {
    let (text, images) =
        expand_question_blocks(SELECT_QUESTION_TEMPLATE, candidates, include_images);
    let ids = candidates
        .iter()
        .map(|(q, _)| q.id.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    let text = text
        .replacen("# ability", &format!("{ability:.2}"), 1)
        .replacen("# Memory", memory_markdown.trim_end(), 1)
        .replacen("# List of Question ID", &ids, 1);
    (text, images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::QuestionOption;

    fn question(id: &str) -> Question {
        Question {
            id: id.into(),
            text: format!("What is {id}?"),
            image_ref: None,
            options: Some(vec![
                QuestionOption {
                    label: "A".into(),
                    text: "first".into(),
                },
                QuestionOption {
                    label: "B".into(),
                    text: "second".into(),
                },
            ]),
            answer_key: Some("A".into()),
            category: None,
            embedding: None,
            difficulty: None,
        }
    }

    #[test]
    fn templates_carry_placeholders() {
        for t in [
            CATEGORIZE_BATCH_TEMPLATE,
            CATEGORIZE_SINGLE_TEMPLATE,
            SELECT_QUESTION_TEMPLATE,
        ] {
            assert!(t.contains(QUESTION_BLOCK), "missing question block");
        }
        assert!(SELECT_QUESTION_TEMPLATE.contains("# ability"));
        assert!(SELECT_QUESTION_TEMPLATE.contains("# Memory"));
        assert!(SELECT_QUESTION_TEMPLATE.contains("# List of Question ID"));
        assert!(CATEGORIZE_SINGLE_TEMPLATE.contains("# Category"));
    }

    #[test]
    fn selection_prompt_snapshot() {
        let q1 = question("q1");
        let mut q2 = question("q2");
        q2.image_ref = Some("img/q2.png".into());
        let memory = "Category | Count | Max Difficulty | Min Difficulty | Avg Difficulty | Accuracy\nBotany | 1 | 0.40 | 0.40 | 0.40 | 1.00\n";
        let (text, images) =
            render_select_question(memory, -0.25, &[(&q1, 0.5), (&q2, -1.0)], true);
        let expected = r#"You are an expert educational AI assistant.
Your task is to select the most appropriate next question from the candidate pool based on:
1. The student's current ability (-0.25) estimated by IRT.
2. The diversity of question categories in the history.
3. The match between question difficulty and student ability.
Prioritize questions that balance category diversity and difficulty alignment.

Statistics in history questions
{
Category | Count | Max Difficulty | Min Difficulty | Avg Difficulty | Accuracy
Botany | 1 | 0.40 | 0.40 | 0.40 | 1.00
}

Candidate Question Pool:
{
Question ID: q1
Difficulty: 0.50
Content: What is q1?
Options: A. first | B. second

Question ID: q2
Difficulty: -1.00
Content: What is q2?
Image: [attached]
Options: A. first | B. second
}

Available IDs: q1, q2
Output JSON format:
{
    "summary": "Summary the Statistics in history questions.Don't merely state the facts; instead, synthesize deeper, abstract, and even metaphysical patterns or principles.",
    "think": "Reasoning here",
    "question_index": "SELECTED_ID"
}
Only return the JSON object. DO NOT explain.
"#;
        assert_eq!(text, expected);
        assert_eq!(images, vec!["img/q2.png".to_string()]);
    }

    #[test]
    fn text_only_mode_drops_images() {
        let mut q = question("q9");
        q.image_ref = Some("http://host/img.png".into());
        let (text, images) = render_select_question("(empty)", 0.0, &[(&q, 0.0)], false);
        assert!(!text.contains("Image:"));
        assert!(images.is_empty());
    }

    #[test]
    fn single_categorization_lists_existing_categories() {
        let q = question("q4");
        let existing = vec!["Algebra".to_string(), "Botany".to_string()];
        let (text, _) = render_categorize_single(&q, 1.25, &existing, true);
        assert!(text.contains("existing list: {Algebra, Botany}"));
        assert!(text.contains("Question ID: q4"));
        assert!(text.contains("Difficulty: 1.25"));
    }

    #[test]
    fn rendering_is_byte_stable() {
        let q = question("q1");
        let a = render_categorize_batch(&[(&q, 0.0)], true);
        let b = render_categorize_batch(&[(&q, 0.0)], true);
        assert_eq!(a, b);
    }

    #[test]
    fn missing_options_render_na() {
        let mut q = question("q1");
        q.options = None;
        let rendered = render_question(&q, 0.0, true);
        assert!(rendered.block.ends_with("Options: N/A"));
    }
}
