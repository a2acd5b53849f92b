#!/usr/bin/env python3
"""Writes the small desk corpus: data/desk/{train,test}.jsonl and vectors.txt.

Vectors have 8 dims: 0-4 topic axes, 5 question, 6 statement, 7 greeting.
Speaker B follows a per-dialogue persona:
  A asks      -> B states on the same topic
  A states    -> agreeable B states, curious B asks, same topic
with a small chance of an off-topic reply.
"""

import argparse
import json
import os
import random

TOPICS = {
    "pets": ["dog", "cat", "puppy", "parrot", "hamster", "kitten"],
    "food": ["pizza", "pasta", "sushi", "soup", "salad", "cake"],
    "music": ["guitar", "piano", "jazz", "concert", "drums", "song"],
    "sports": ["soccer", "tennis", "swimming", "running", "hockey", "golf"],
    "work": ["office", "boss", "meeting", "project", "desk", "email"],
}
QUESTION_WORDS = ["do", "you", "what", "about", "how", "?"]
STATEMENT_WORDS = ["i", "my", "really", "love", "have", "."]
GREETING_WORDS = ["hello", "hi", "hey", "there", "morning", "friend", "!"]
NEUTRAL_WORDS = ["the", "a", "and", "like", "lot"]

QUESTION_TEMPLATES = [
    "do you like {n} ?",
    "what about {n} ?",
    "how about a {n} ?",
    "do you have a {n} ?",
    "what {n} do you like ?",
    "do you like {n} and {m} ?",
]
STATEMENT_TEMPLATES = [
    "i like {n} .",
    "i really love {n} .",
    "my {n} is great .",
    "i have a {n} .",
    "i like the {n} a lot .",
    "i love {n} and {m} .",
]
GREETINGS = [
    " ".join(w for w in (head, there, friend, end) if w)
    for head in ("hello", "hi", "hey", "good morning")
    for there in ("", "there")
    for friend in ("", "friend")
    for end in ("!", ".")
]


def word_vectors(rng):
    vecs = {}

    def noisy(base, scale):
        return [b + rng.gauss(0.0, scale) for b in base]

    for t, (_, words) in enumerate(TOPICS.items()):
        for w in words:
            base = [0.0] * 8
            base[t] = 2.0
            vecs[w] = noisy(base, 0.35)
    for w in QUESTION_WORDS:
        base = [0.0] * 8
        base[5] = 1.5
        vecs[w] = noisy(base, 0.3)
    for w in STATEMENT_WORDS:
        base = [0.0] * 8
        base[6] = 1.5
        vecs[w] = noisy(base, 0.3)
    for w in GREETING_WORDS:
        base = [0.0] * 8
        base[7] = 2.0
        vecs[w] = noisy(base, 0.3)
    for w in NEUTRAL_WORDS:
        vecs[w] = noisy([0.0] * 8, 0.2)
    vecs["good"] = noisy([0.0] * 7 + [1.5], 0.3)
    vecs["great"] = noisy([0.0] * 6 + [1.0, 0.0], 0.3)
    vecs["is"] = noisy([0.0] * 8, 0.2)
    return vecs


def sentence(rng, topic, kind):
    words = TOPICS[topic]
    n, m = rng.sample(words, 2)
    templates = QUESTION_TEMPLATES if kind == "q" else STATEMENT_TEMPLATES
    return rng.choice(templates).format(n=n, m=m)


def dialogue(rng, idx, prefix):
    topics = list(TOPICS)
    main = rng.choice(topics)
    second = rng.choice([t for t in topics if t != main])
    persona = rng.choice(["agreeable", "curious"])
    n_turns = rng.randint(6, 10)
    switch_at = rng.randint(3, n_turns + 2)
    turns = [{"a": rng.choice(GREETINGS), "b": rng.choice(GREETINGS)}]
    for t in range(1, n_turns):
        topic = main if t < switch_at else second
        a_kind = rng.choice(["q", "s"])
        if a_kind == "q":
            b_kind = "s"
        else:
            b_kind = "s" if persona == "agreeable" else "q"
        b_topic = topic
        if rng.random() < 0.08:
            b_topic = rng.choice(topics)
            b_kind = rng.choice(["q", "s"])
        turns.append({"a": sentence(rng, topic, a_kind), "b": sentence(rng, b_topic, b_kind)})
    return {"id": f"{prefix}{idx:03d}", "turns": turns}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "desk"))
    parser.add_argument("--seed", type=int, default=20)
    parser.add_argument("--train", type=int, default=100)
    parser.add_argument("--test", type=int, default=50)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    os.makedirs(args.out, exist_ok=True)
    vecs = word_vectors(rng)
    with open(os.path.join(args.out, "vectors.txt"), "w") as f:
        for w, v in vecs.items():
            f.write(w + " " + " ".join(f"{x:.6f}" for x in v) + "\n")
    for name, count, prefix in (("train", args.train, "tr"), ("test", args.test, "te")):
        with open(os.path.join(args.out, f"{name}.jsonl"), "w") as f:
            for i in range(count):
                f.write(json.dumps(dialogue(rng, i, prefix)) + "\n")


if __name__ == "__main__":
    main()
