use serde::{Deserialize, Serialize};

/// The query tree accepted by the search APIs.
///
/// Serializes to the JSON grammar
/// `{"match": {"field": f, "query": q}}`,
/// `{"match_phrase": {"field": f, "query": q, "slop": s}}`,
/// `{"bool": {"must": […], "should": […], "must_not": […], "minimum_should_match": k}}`
/// and `{"match_all": {}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum QueryAst {
    MatchAll {},
    Match {
        #[serde(default = "text_field")]
        field: String,
        #[serde(rename = "query")]
        text: String,
    },
    MatchPhrase {
        #[serde(default = "text_field")]
        field: String,
        #[serde(rename = "query")]
        text: String,
        #[serde(default)]
        slop: u32,
    },
    Bool {
        #[serde(default)]
        must: Vec<QueryAst>,
        #[serde(default)]
        should: Vec<QueryAst>,
        #[serde(default)]
        must_not: Vec<QueryAst>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        minimum_should_match: Option<u32>,
    },
}

/// The analyzed full-text field.
pub const TEXT_FIELD: &str = "text";

fn text_field() -> String {
    TEXT_FIELD.to_owned()
}

impl QueryAst {
    pub fn match_all() -> Self {
        QueryAst::MatchAll {}
    }

    pub fn matches(text: impl Into<String>) -> Self {
        QueryAst::Match {
            field: text_field(),
            text: text.into(),
        }
    }

    /// Exact match on a metadata keyword field such as `language`.
    pub fn keyword(field: impl Into<String>, value: impl Into<String>) -> Self {
        QueryAst::Match {
            field: field.into(),
            text: value.into(),
        }
    }

    pub fn phrase(text: impl Into<String>, slop: u32) -> Self {
        QueryAst::MatchPhrase {
            field: text_field(),
            text: text.into(),
            slop,
        }
    }

    pub fn must(clauses: Vec<QueryAst>) -> Self {
        QueryAst::Bool {
            must: clauses,
            should: Vec::new(),
            must_not: Vec::new(),
            minimum_should_match: None,
        }
    }

    pub fn should(clauses: Vec<QueryAst>, minimum_should_match: u32) -> Self {
        QueryAst::Bool {
            must: Vec::new(),
            should: clauses,
            must_not: Vec::new(),
            minimum_should_match: Some(minimum_should_match),
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        QueryAst::deserialize(value)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("query serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_grammar() {
        let q = QueryAst::from_json(&json!({
            "bool": {
                "must": [{"match": {"field": "text", "query": "cat"}}],
                "should": [{"match_phrase": {"field": "text", "query": "climate change", "slop": 1}}],
                "must_not": [{"match": {"field": "language", "query": "fra"}}],
                "minimum_should_match": 1
            }
        }))
        .unwrap();
        let QueryAst::Bool { must, should, must_not, minimum_should_match } = &q else {
            panic!("expected bool, got {q:?}");
        };
        assert_eq!(must[0], QueryAst::matches("cat"));
        assert_eq!(should[0], QueryAst::phrase("climate change", 1));
        assert_eq!(must_not[0], QueryAst::keyword("language", "fra"));
        assert_eq!(*minimum_should_match, Some(1));
        assert_eq!(QueryAst::from_json(&q.to_json()).unwrap(), q);
    }

    #[test]
    fn defaults_and_rejections() {
        assert_eq!(
            QueryAst::from_json(&json!({"match_phrase": {"query": "a b"}})).unwrap(),
            QueryAst::phrase("a b", 0)
        );
        assert_eq!(QueryAst::from_json(&json!({"match_all": {}})).unwrap(), QueryAst::match_all());
        assert!(QueryAst::from_json(&json!({"match_phrase": {"query": "a", "slop": -1}})).is_err());
        assert!(QueryAst::from_json(&json!({"fuzzy": {"query": "a"}})).is_err());
        assert!(QueryAst::from_json(&json!({"match": {"query": "a", "boost": 2}})).is_err());
    }
}
