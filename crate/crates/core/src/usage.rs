//! Heuristic call-site forms for each API.
//!
//! Definitions and call sites look different (keywords, types, defaults), so
//! each API gets a handful of one-line usage examples that imitate how it is
//! invoked. Retrieval compares a draft line against these instead of against
//! the definition.

use serde::{Deserialize, Serialize};

use crate::api::{ApiKind, ApiRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormId {
    PyRegularArgs,
    PyRegularQualifiedArgs,
    PyRegularNoArgs,
    PyRegularQualifiedNoArgs,
    PyClassInstanceArgs,
    PyClassStaticArgs,
    PyClassInstanceNoArgs,
    PyClassStaticNoArgs,
    PyCtorArgs,
    PyCtorAssignArgs,
    PyCtorNoArgs,
    PyCtorAssignNoArgs,
    JavaInstanceCall,
    JavaStaticCall,
    JavaTypedDecl,
    JavaCtorAssign,
    JavaCtorNew,
    JavaInnerCall,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageExample {
    pub text: String,
    pub form_id: FormId,
}

/// `RingBuffer` → `ring_buffer`, `HTTPServer` → `http_server`.
///
/// An underscore goes before an uppercase letter that follows a lowercase
/// letter or digit, or that ends an uppercase run followed by lowercase.
pub fn snake_case(name: &str) -> String {
    let chars: Vec<char> = name.chars().collect();
    let mut out = String::with_capacity(name.len() + 4);
    for (i, &c) in chars.iter().enumerate() {
        if c.is_uppercase() && i > 0 {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            let boundary =
                prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower);
            if boundary && !out.ends_with('_') {
                out.push('_');
            }
        }
        out.extend(c.to_lowercase());
    }
    out
}

/// Lowercases the first letter only: `RingBuffer` → `ringBuffer`.
pub fn camel_case(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

const JAVA_SIMPLE_TYPES: &[&str] = &[
    "void", "boolean", "byte", "char", "short", "int", "long", "float", "double", "String",
];

/// Whether a Java return type warrants the typed-declaration form.
pub fn is_complex_java_type(ty: &str) -> bool {
    !JAVA_SIMPLE_TYPES.contains(&ty.trim())
}

/// Variable name for a declaration of type `ty`: `List<Item>` → `list`,
/// `Node[]` → `nodeArray`.
fn java_var_name(ty: &str) -> String {
    let ty = ty.trim();
    let is_array = ty.ends_with("[]");
    let base = ty.split(['<', '[']).next().unwrap_or(ty).trim();
    let base = base.rsplit('.').next().unwrap_or(base);
    let name = camel_case(base);
    if is_array {
        format!("{name}Array")
    } else {
        name
    }
}

/// Usage examples for `record`, deduplicated in table order.
pub fn synth_usage_examples(record: &ApiRecord) -> Vec<UsageExample> {
    let name = &record.name;
    let args = record.param_names.join(", ");
    let class = record.class_name.as_deref().unwrap_or_default();
    let mut forms: Vec<(FormId, String)> = Vec::new();

    match record.kind {
        ApiKind::RegularFunction => {
            let module = record.file_stem();
            forms.push((FormId::PyRegularArgs, format!("{name}({args})")));
            forms.push((
                FormId::PyRegularQualifiedArgs,
                format!("{module}.{name}({args})"),
            ));
            forms.push((FormId::PyRegularNoArgs, format!("{name}()")));
            forms.push((
                FormId::PyRegularQualifiedNoArgs,
                format!("{module}.{name}()"),
            ));
        }
        ApiKind::ClassFunction => {
            let instance = snake_case(class);
            forms.push((
                FormId::PyClassInstanceArgs,
                format!("{instance}.{name}({args})"),
            ));
            forms.push((FormId::PyClassStaticArgs, format!("{class}.{name}({args})")));
            forms.push((
                FormId::PyClassInstanceNoArgs,
                format!("{instance}.{name}()"),
            ));
            forms.push((FormId::PyClassStaticNoArgs, format!("{class}.{name}()")));
        }
        ApiKind::Constructor => {
            let instance = snake_case(class);
            forms.push((FormId::PyCtorArgs, format!("{class}({args})")));
            forms.push((
                FormId::PyCtorAssignArgs,
                format!("{instance} = {class}({args})"),
            ));
            forms.push((FormId::PyCtorNoArgs, format!("{class}()")));
            forms.push((
                FormId::PyCtorAssignNoArgs,
                format!("{instance} = {class}()"),
            ));
        }
        ApiKind::JavaMethod => {
            let instance = camel_case(class);
            let call = format!("{instance}.{name}({args})");
            forms.push((FormId::JavaInstanceCall, call.clone()));
            if record.is_static {
                forms.push((FormId::JavaStaticCall, format!("{class}.{name}({args})")));
            }
            if let Some(ty) = record
                .return_type
                .as_deref()
                .filter(|t| is_complex_java_type(t))
            {
                forms.push((
                    FormId::JavaTypedDecl,
                    format!("{ty} {} = {call}", java_var_name(ty)),
                ));
            }
        }
        ApiKind::JavaConstructor => {
            forms.push((
                FormId::JavaCtorAssign,
                format!("{class} {} = new {class}({args})", camel_case(class)),
            ));
            forms.push((FormId::JavaCtorNew, format!("new {class}({args})")));
        }
        ApiKind::JavaInnerClassMethod => {
            let outer = record.outer_class.as_deref().unwrap_or(class);
            forms.push((
                FormId::JavaInnerCall,
                format!("{}.{}.{name}({args})", camel_case(outer), camel_case(class)),
            ));
        }
    }

    let mut out: Vec<UsageExample> = Vec::with_capacity(forms.len());
    for (form_id, text) in forms {
        if !out.iter().any(|u| u.text == text) {
            out.push(UsageExample { text, form_id });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;

    fn record(kind: ApiKind, name: &str, class: Option<&str>, params: &[&str]) -> ApiRecord {
        ApiRecord {
            name: name.into(),
            signature: String::new(),
            class_name: class.map(str::to_string),
            enclosing_class_decl: None,
            outer_class: None,
            body: String::new(),
            source: String::new(),
            file: "pkg/io_utils.py".into(),
            language: Language::Python,
            kind,
            is_static: false,
            param_names: params.iter().map(|s| s.to_string()).collect(),
            return_type: None,
            start_line: 1,
            end_line: 1,
        }
    }

    fn texts(examples: &[UsageExample]) -> Vec<&str> {
        examples.iter().map(|u| u.text.as_str()).collect()
    }

    #[test]
    fn snake_and_camel() {
        assert_eq!(snake_case("RingBuffer"), "ring_buffer");
        assert_eq!(snake_case("HTTPServer"), "http_server");
        assert_eq!(snake_case("Foo"), "foo");
        assert_eq!(snake_case("already_snake"), "already_snake");
        assert_eq!(snake_case("getHTTPResponse2"), "get_http_response2");
        assert_eq!(snake_case("Vec3D"), "vec3_d");
        assert_eq!(camel_case("Foo"), "foo");
        assert_eq!(camel_case("RingBuffer"), "ringBuffer");
    }

    #[test]
    fn python_regular_forms() {
        let r = record(
            ApiKind::RegularFunction,
            "load_data",
            None,
            &["path", "fmt"],
        );
        assert_eq!(
            texts(&synth_usage_examples(&r)),
            vec![
                "load_data(path, fmt)",
                "io_utils.load_data(path, fmt)",
                "load_data()",
                "io_utils.load_data()"
            ]
        );
    }

    #[test]
    fn argless_constructor_collapses() {
        let r = record(ApiKind::Constructor, "__init__", Some("Foo"), &[]);
        let out = synth_usage_examples(&r);
        assert_eq!(texts(&out), vec!["Foo()", "foo = Foo()"]);
        assert_eq!(out[0].form_id, FormId::PyCtorArgs);
    }

    #[test]
    fn java_forms() {
        let mut ctor = record(ApiKind::JavaConstructor, "Widget", Some("Widget"), &["id"]);
        ctor.language = Language::Java;
        assert_eq!(
            texts(&synth_usage_examples(&ctor)),
            vec!["Widget widget = new Widget(id)", "new Widget(id)"]
        );

        let mut method = record(ApiKind::JavaMethod, "find", Some("Registry"), &["key"]);
        method.is_static = true;
        method.return_type = Some("List<Item>".into());
        assert_eq!(
            texts(&synth_usage_examples(&method)),
            vec![
                "registry.find(key)",
                "Registry.find(key)",
                "List<Item> list = registry.find(key)"
            ]
        );

        method.is_static = false;
        method.return_type = Some("int".into());
        assert_eq!(
            texts(&synth_usage_examples(&method)),
            vec!["registry.find(key)"]
        );
    }

    #[test]
    fn complex_type_rule() {
        assert!(!is_complex_java_type("void"));
        assert!(!is_complex_java_type("String"));
        assert!(is_complex_java_type("Integer"));
        assert!(is_complex_java_type("int[]"));
        assert_eq!(java_var_name("int[]"), "intArray");
        assert_eq!(java_var_name("java.util.Map<K, V>"), "map");
    }
}
