"""Prompt templates for the three provider calls.

The first line of each prompt doubles as a task marker the stub provider
dispatches on, so prompts and stub stay in lockstep. Prompts are built by
concatenation, never str.format, so user text with braces passes through
untouched.
"""

from __future__ import annotations

DECOUPLE_MARKER = "Rewrite the question as per-channel retrieval requests."
AUGMENT_MARKER = "Write background context and rephrasings for a question."
ANSWER_MARKER = "Answer the question using the retrieved video evidence."

SYSTEM_PROMPT = "You are a careful assistant for video question answering."

QUESTION_PREFIX = "Question: "

_DECOUPLE_BODY = """
The question is about a video. Three auxiliary text channels can be searched:
"asr" (spoken words), "ocr" (on-screen text), and "det" (visible objects).
Reply with exactly one JSON object and nothing else:
{"asr": <string or null>, "ocr": <string or null>, "det": <string or null>}
Put the words worth searching in each channel, or null when the channel is
not needed for this question.
"""

_AUGMENT_BODY = """
First write one short paragraph of background context that could help answer
the question. Then list two or three rephrasings of the question that keep
the same meaning, one per line, numbered "1.", "2.", "3.".
"""

_ANSWER_BODY = """
The sections below were retrieved from the video's auxiliary text channels.
Answer the question in the QUESTION section concisely, grounded in the
evidence.

"""


def decouple_prompt(question: str) -> str:
    return DECOUPLE_MARKER + _DECOUPLE_BODY + QUESTION_PREFIX + question


def augment_prompt(question: str) -> str:
    return AUGMENT_MARKER + _AUGMENT_BODY + QUESTION_PREFIX + question


def answer_prompt(bundle_text: str) -> str:
    return ANSWER_MARKER + _ANSWER_BODY + bundle_text


def extract_question(user_prompt: str) -> str:
    """Pull the question text back out of a decouple/augment prompt."""
    marker = "\n" + QUESTION_PREFIX
    idx = user_prompt.rfind(marker)
    if idx < 0:
        return ""
    return user_prompt[idx + len(marker) :].strip()
