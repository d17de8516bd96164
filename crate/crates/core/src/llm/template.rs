//! Prompt templates, one per stage, with `{{name}}` placeholders.

use std::collections::BTreeMap;

use super::stage::StageKind;

pub(crate) const CANDIDATE_EXTRACTION: &str = r#"You build a Wikidata-style knowledge graph by reading text and emitting factual triplets.

A triplet has the form (subject, relation, object):
- subject: the named entity or concept the statement is about.
- relation: a Wikidata-style predicate connecting subject and object.
- object: the named entity or concept the subject relates to.

A triplet may carry qualifiers that add context such as time, place, or circumstance. A qualifier has a relation and an object of its own; it is always attached to a triplet and never stands alone as a fact.

Extract every meaningful factual relationship from the text below. Return ONLY a JSON list of objects with these keys:
- "subject": subject entity.
- "relation": relation connecting subject and object.
- "object": object entity.
- "qualifiers": list of {"relation": ..., "object": ...} objects, possibly empty.
- "subject_type": class describing the subject.
- "object_type": class describing the object.

Example. Text: In 2010, Christopher Nolan directed the science fiction movie Inception
Output: [{"subject": "Nolan", "relation": "directed", "object": "Inception", "qualifiers": [{"relation": "point in time", "object": "2010"}], "subject_type": "human", "object_type": "film"}]

Text: {{text}}"#;

pub(crate) const TYPE_SELECTION: &str = r#"You refine a triplet extracted from text against a Wikidata-style ontology.

The triplet's free-form subject and object type names were matched against the ontology's entity types by semantic similarity, producing the candidate lists below. Select the candidate type that best describes each of the subject and the object, given the triplet and the original text. Choose only from the provided candidates.

Text: {{text}}
Extracted triplet: {{triplet}}
Candidate subject types: {{subject_type_candidates}}
Candidate object types: {{object_type_candidates}}

Answer ONLY with JSON of the form {"subject_type": ..., "object_type": ...}."#;

pub(crate) const RELATION_SELECTION: &str = r#"You refine a triplet extracted from text against a Wikidata-style ontology.

The candidate relations below are ontology properties that can legally connect the triplet's subject and object types (counting both directions), ranked by similarity to the extracted relation. Select the candidate that best expresses what the text states. Choose only from the provided candidates.

Text: {{text}}
Extracted triplet: {{triplet}}
Candidate relations: {{relation_candidates}}

Answer ONLY with JSON of the form {"relation": ...}."#;

pub(crate) const ENTITY_LINKING: &str = r#"A triplet extracted from text is being merged into an existing knowledge graph, and one of its entity mentions must be reconciled with entities already stored. The candidates below are the stored entries most similar to the mention, listed together with their types.

Decide whether the mention denotes one of the candidates.
- If yes, answer with that candidate's name exactly as it appears in the list. Do not modify it.
- If none fits, answer with the string "None".
- Output the name or "None" only, with no explanations.

Text: {{text}}
Extracted triplet: {{triplet}}
Mention: {{mention}}
Candidates: {{candidates}}"#;

pub(crate) const QA_ENTITY_EXTRACTION: &str = r#"Extract Wikidata-like entities from the question below. It is guaranteed that at least one entity is mentioned. Include any entity, named or abstract, that could help retrieve the information needed to answer the question.

Question: {{question}}

Answer ONLY with a JSON list of the extracted entity names, no additional symbols."#;

pub(crate) const QA_ENTITY_LINKING: &str = r#"Identify which entities from a pre-constructed knowledge graph could help answer a question.

Question: {{question}}
Entities: {{candidates}}

An entity is relevant when it is directly or indirectly useful for answering the question: look for names, events, dates, and concepts that match or connect to the question. Do not dismiss indirect relevance (for a question about a competition, its teams or winners may help).

Always select at least one entity; never return an empty list. Answer ONLY with a JSON list of objects of the form {"entity": name}, copying names exactly as written above."#;

pub(crate) const QA_SUBANSWER: &str = r#"Answer the question using ONLY the knowledge graph triplets below. Each line is one fact written as subject — relation — object, with qualifiers in parentheses. If the triplets do not contain the answer, reply with the single word unknown.

Triplets:
{{triplets}}

Question: {{subquestion}}

Reply with the answer only, no explanations."#;

pub(crate) const QA_DECOMPOSE: &str = r#"You decompose a multi-hop question one reasoning hop at a time.

Original question: {{question}}
Subquestions already answered:
{{history}}

If nothing has been answered yet, state the first 1-hop subquestion required to begin answering the original question. Otherwise integrate the obtained answers and state the next 1-hop subquestion, reducing the remaining hops by one. Perform only one reasoning hop. Output just the subquestion, with no explanations."#;

pub(crate) const QA_FINAL_CHECK: &str = r#"You check whether a multi-hop question is fully resolved by the subquestions answered so far.

Original question: {{question}}
Subquestion and answer sequence:
{{history}}

If the sequence completely resolves the original question, output only the final answer to the original question (answer the original question, not just the last subquestion). If more hops are needed, output exactly: NOT FINAL

Output must be a single line: the final answer, or the exact string NOT FINAL. No prefixes, suffixes, or explanations.{{requirement}}

Example:
  Original question: Who was the spouse of the person who wrote The Iron Heel?
  Sequence: Who wrote The Iron Heel? -> Jack London; Who was the spouse of Jack London? -> Charmian London
  Output: Charmian London

Example:
  Original question: Which country's capital is closest to the birthplace of Nikola Tesla?
  Sequence: Where was Nikola Tesla born? -> Smiljan, Croatia
  Output: NOT FINAL"#;

pub(crate) fn template_for(stage: StageKind) -> &'static str {
    match stage {
        StageKind::CandidateExtraction => CANDIDATE_EXTRACTION,
        StageKind::TypeSelection => TYPE_SELECTION,
        StageKind::RelationSelection => RELATION_SELECTION,
        StageKind::EntityLinking => ENTITY_LINKING,
        StageKind::QaEntityExtraction => QA_ENTITY_EXTRACTION,
        StageKind::QaEntityLinking => QA_ENTITY_LINKING,
        StageKind::QaSubanswer => QA_SUBANSWER,
        StageKind::QaDecompose => QA_DECOMPOSE,
        StageKind::QaFinalCheck => QA_FINAL_CHECK,
    }
}

/// Placeholder names a template requires, in first-appearance order.
pub(crate) fn placeholders(template: &str) -> Vec<String> {
    let mut names = Vec::new();
    let bytes = template.as_bytes();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if &bytes[i..i + 2] == b"{{" {
            if let Some(end) = template[i + 2..].find("}}") {
                let name = &template[i + 2..i + 2 + end];
                if !name.is_empty()
                    && name.chars().all(|c| c.is_ascii_lowercase() || c == '_')
                    && !names.contains(&name.to_string())
                {
                    names.push(name.to_string());
                }
                i += 2 + end + 2;
                continue;
            }
        }
        i += 1;
    }
    names
}

/// Substitute every placeholder; the missing name is returned on failure.
pub(crate) fn render(
    template: &str,
    variables: &BTreeMap<String, String>,
) -> Result<String, String> {
    let mut rendered = template.to_string();
    for name in placeholders(template) {
        let value = variables.get(&name).ok_or(name.clone())?;
        rendered = rendered.replace(&format!("{{{{{name}}}}}"), value);
    }
    Ok(rendered)
}
