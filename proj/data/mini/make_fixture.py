#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the mini fixture: 10 conversations, 100 passages, qrels and scripted LLM replies."""
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent
rng = random.Random(7)

TOWNS = ["Varnholt", "Quillaby", "Tessmoor", "Orrinvale", "Brackwater",
         "Dunmerrow", "Caskelby", "Fenwright", "Hallowick", "Pemberlow"]
DISTRACTORS = ["Ashcombe", "Belltarn", "Corrowen", "Drayfield", "Eskdown", "Farrowby", "Glenmarsh",
               "Hobbleton", "Ivybridge", "Jasperton", "Kettlewell", "Lornhaven", "Marlowmere", "Netherby",
               "Oakhurst", "Pinchcombe", "Quarrendon", "Rushmere", "Stollbury", "Thistleby", "Umberleigh",
               "Valemouth", "Wexcombe", "Yarrowdale", "Zennorbrook"]
INDUSTRIES = ["shipbuilding", "weaving", "pottery", "glassmaking", "brewing",
              "tanning", "milling", "quarrying", "clockmaking", "ropemaking"]
SOURCES = ["QuAC"] * 5 + ["NQ"] * 3 + ["TREC"] * 2


def town_facts(name):
    return {"year": rng.randint(1200, 1800), "industry": rng.choice(INDUSTRIES),
            "river": rng.choice(["Ouse", "Tamar", "Wye", "Exe", "Avon", "Test"])}


records, passages, qrels, rw_fsl, ed_self = [], [], [], [], []
pid = 0


def add_passage(text):
    global pid
    pid += 1
    passages.append({"id": f"p{pid:03d}", "contents": text})
    return f"p{pid:03d}"


for conv_no, town in enumerate(TOWNS, start=1):
    f = town_facts(town)
    turns = [
        (f"What is {town}?", f"What is {town}?",
         f"{town} is a market town on the river {f['river']}.",
         f"{town} is a market town on the river {f['river']}, with a long tradition of trade.",
         f"What is {town}?", f"What is {town}, the market town on the river {f['river']}?"),
        ("When was it founded?", f"When was {town} founded?",
         f"{town} was founded in {f['year']}.",
         f"{town} was founded in {f['year']} by settlers who built a bridge over the river.",
         f"When was {town} founded?", f"When was the market town {town} founded by settlers?"),
        ("What was the main industry?", f"What was the main industry of {town}?",
         f"The main industry of {town} was {f['industry']}.",
         f"For centuries the main industry of {town} was {f['industry']}, employing most families.",
         f"What was the main industry of {town}?", f"What was the main industry of {town}, the town founded in {f['year']}?"),
    ]
    for turn_no, (q, human, answer, gold_text, rw, ed) in enumerate(turns, start=1):
        records.append({"Conversation_no": conv_no, "Turn_no": turn_no, "Question": q, "Rewrite": human,
                        "Answer": answer, "Conversation_source": SOURCES[conv_no - 1]})
        gold = add_passage(gold_text)
        qid = f"{conv_no}_{turn_no}"
        if not (conv_no == 10 and turn_no == 3):  # one task without judgments, dropped by prepare
            qrels.append(f"{qid} 0 {gold} 1")
        rw_fsl.append({"query_id": qid, "text": f"Rewrite: {rw}"})
        ed_self.append({"query_id": qid, "text": ed})

# Distractors share the questions' vocabulary but never the town names.
for name in DISTRACTORS:
    f = town_facts(name)
    add_passage(f"{name} was founded in {f['year']}, and the main industry was {f['industry']}.")
    add_passage(f"What is {name}? A market town where the industry was {f['industry']} and it was founded early.")
while len(passages) < 100:
    a, b = rng.sample(INDUSTRIES, 2)
    add_passage(f"The main industry was {a}, and later {b} was founded as a second industry.")
assert len(passages) == 100

(OUT / "conversations.json").write_text(json.dumps(records, indent=1) + "\n")
(OUT / "passages.jsonl").write_text("".join(json.dumps(p) + "\n" for p in passages))
(OUT / "qrels.txt").write_text("\n".join(qrels) + "\n")
(OUT / "responses_rw_fsl.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rw_fsl))
(OUT / "responses_ed_self.jsonl").write_text("".join(json.dumps(r) + "\n" for r in ed_self))
