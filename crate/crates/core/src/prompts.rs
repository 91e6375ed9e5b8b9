//! Built-in prompt templates for the four analysis stages.

use crate::backend::Role;
use crate::template::{
    PromptTemplate, TemplateSet, DIAGNOSIS_ID, DUPLICATE_ID, ROOT_ERROR_ID, SUMMARIZE_CHAIN_ID,
};

/// Separates the two reports in the duplicate-detection prompt.
pub const SECOND_REPORT_MARKER: &str = "Second report:";

const ROOT_SYSTEM: &str = "You are a software QA assistant. The user lists the errors raised by one failed test, numbered in the order they appear in the log. Identify the root cause error, the one that triggered the others, and reply with its error number only.";

const ROOT_EXAMPLE_QUESTION: &str = "[1] FAILED tests/test_io.py::test_save - AssertionError\n[2] PermissionError: [Errno 13] Permission denied: '/data/out.bin'\n[3] ERROR: 1 test failed";

const ROOT_EXAMPLE_ANSWER: &str = "2";

const DIAGNOSIS_SYSTEM: &str = "You are a software QA assistant to help analyze whether an error is caused by bug in code or test environment issue (for example unstable network, disk out of space, etc.) based on my given error log.\nPlease give final answer in 'True' if the error is caused by bug, or 'False' if the error is caused by test environment issue, any other answer is not allowed. I will provide the error info next.";

const DIAGNOSIS_SHOTS: [(&str, &str); 3] = [
    (
        "The error is: \"[1] what(): Native API failed. Native API returns: -1 (PI_ERROR_DEVICE_NOT_FOUND) -1 (PI_ERROR_DEVICE_NOT_FOUND)\".\nAnswer:",
        "PI_ERROR_DEVICE_NOT_FOUND is not network connection error or disk out of space error, so according to the criteria, it is a bug rather than test environment issue. Final answer: True",
    ),
    (
        "The error is: \"terminate called after throwing an instance of 'dnnl::error'\".\nAnswer:",
        "dnnl::error is not network connection error or disk out of space error, so according to the criteria, it is a bug rather than test environment issue. Final answer: True",
    ),
    (
        "The error is: \"requests.exceptions.ConnectionError: HTTPSConnectionPool(host='download.example.com', port=443): Max retries exceeded with url: /model.bin\".\nAnswer:",
        "Max retries exceeded while connecting to a remote host is a network connection error, so according to the criteria, it is a test environment issue rather than a bug. Final answer: False",
    ),
];

const DIAGNOSIS_TARGET: &str = "The error is: \"{error_line}\".\nAnswer:";

const SUMMARIZE_TASK: &str = "Please generate a JSON snippet summarizing an issue for bug reporting with the format {{'summary':'', 'description':''}} based on the log: \"{error_content}\".";

const SUMMARIZE_REFINE: &str = "Please fill in the JSON 'description' field with the error information of the issue without additional explanation. The line of error in the log is: \"{error_line}\", please fill in the JSON 'summary' field with the exact key error type and simplified error message, and keep the 'description' field unchanged. The length of 'summary' field is kept under 10 words.";

const SUMMARIZE_FORMAT: &str = "Please check the format and make sure it is a standard non-nested JSON snippet enclosed in '```json ... ```', with the format {{'summary':'', 'description':''}}.";

const DUPLICATE_SYSTEM: &str = "You are a software QA assistant that detects duplicated bug reports. Two reports are duplicates when they describe the same underlying defect, even if they are worded differently. Give a one-sentence reason, then end your reply with a single word: YES if the reports are duplicates, NO otherwise.";

const DUPLICATE_PAIR: &str = "First report:\nsummary: {summary_a}\ndescription: {description_a}\n\nSecond report:\nsummary: {summary_b}\ndescription: {description_b}";

pub fn root_error_template() -> PromptTemplate {
    PromptTemplate::from_turns(
        ROOT_ERROR_ID,
        &[
            (Role::System, ROOT_SYSTEM),
            (Role::User, ROOT_EXAMPLE_QUESTION),
            (Role::Assistant, ROOT_EXAMPLE_ANSWER),
            (Role::User, "{error_list}"),
        ],
    )
    .expect("built-in template is valid")
}

pub fn diagnosis_template() -> PromptTemplate {
    let mut turns = alloc::vec![(Role::System, DIAGNOSIS_SYSTEM)];
    for (question, answer) in DIAGNOSIS_SHOTS {
        turns.push((Role::User, question));
        turns.push((Role::Assistant, answer));
    }
    turns.push((Role::User, DIAGNOSIS_TARGET));
    PromptTemplate::from_turns(DIAGNOSIS_ID, &turns).expect("built-in template is valid")
}

/// Three user turns; the executor sends them one at a time, appending each
/// assistant reply before the next turn.
pub fn summarize_chain_template() -> PromptTemplate {
    PromptTemplate::from_turns(
        SUMMARIZE_CHAIN_ID,
        &[
            (Role::User, SUMMARIZE_TASK),
            (Role::User, SUMMARIZE_REFINE),
            (Role::User, SUMMARIZE_FORMAT),
        ],
    )
    .expect("built-in template is valid")
}

pub fn duplicate_template() -> PromptTemplate {
    PromptTemplate::from_turns(
        DUPLICATE_ID,
        &[
            (Role::System, DUPLICATE_SYSTEM),
            (Role::User, DUPLICATE_PAIR),
        ],
    )
    .expect("built-in template is valid")
}

pub fn embedded_templates() -> TemplateSet {
    TemplateSet {
        root_error: root_error_template(),
        diagnosis: diagnosis_template(),
        summarize_chain: summarize_chain_template(),
        duplicate: duplicate_template(),
    }
}
