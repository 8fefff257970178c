#!/usr/bin/env python3
"""Regenerates the synthetic sample data under data/.

Everything is fabricated from small phrase tables with a fixed seed, so the
output is stable across runs and carries no third-party text.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data"

ZH_LEGAL = [
    "当事人应当遵循诚实信用原则", "人民法院依法独立行使审判权", "合同自成立时生效",
    "行政机关应当依法履行职责", "被告对原告的损失承担赔偿责任", "本案争议焦点在于合同效力",
    "依照相关法律规定判决如下", "上诉人的上诉请求不能成立", "公民的合法权益受法律保护",
    "证据不足以证明其主张", "双方应当按照约定履行义务", "违约方应当承担继续履行的责任",
]
ZH_NEWS = [
    "会议强调要加强法治建设", "有关部门发布了新的工作方案", "代表们围绕立法工作建言献策",
    "各地积极推进基层治理", "新规将于下月起正式施行", "专家表示该举措意义重大",
]
ZH_GENERAL = [
    "今天的天气很好", "城市交通逐步改善", "这家企业发布了年度报告", "市场需求持续增长",
    "学校组织学生参加社会实践", "新产品受到消费者欢迎", "科研团队取得新进展",
]
EN_GENERAL = [
    "the company reported steady growth this quarter", "researchers published a new dataset",
    "the city opened a new public library", "engineers improved the battery design",
    "the market responded to the announcement", "students attended the annual science fair",
]
EN_NEWS = [
    "lawmakers debated the proposed amendment", "the court released its written opinion",
    "the ministry announced a regulatory review", "officials outlined the new enforcement policy",
    "the committee heard testimony on the bill",
]

SOURCES = [
    # (lang, source, phrases, joiner, share)
    ("zh", "judicial_judgments", ZH_LEGAL, "，", 0.30),
    ("zh", "legal_political_news", ZH_NEWS, "，", 0.15),
    ("zh", "articles_interpretations", ZH_LEGAL, "；", 0.05),
    ("zh", "legal_books_papers", ZH_LEGAL, "。", 0.05),
    ("zh", "general_industry", ZH_GENERAL, "，", 0.15),
    ("en", "general_industry", EN_GENERAL, ", ", 0.20),
    ("en", "legal_political_news", EN_NEWS, ", ", 0.10),
]


def sentence(rng, phrases, joiner, n):
    return joiner.join(rng.choice(phrases) for _ in range(n)) + ("。" if joiner != ", " else ".")


def corpus(rng, n=1000):
    docs = []
    weights = [s[4] for s in SOURCES]
    for i in range(n):
        lang, source, phrases, joiner, _ = rng.choices(SOURCES, weights)[0]
        kind = rng.random()
        if kind < 0.05:
            text = rng.choice(phrases)[:6]  # too short
        elif kind < 0.09:
            text = "<div>[" + "]{|}#*".join(rng.choice(phrases)[:3] for _ in range(20)) + "</div>"
        else:
            text = " ".join(sentence(rng, phrases, joiner, rng.randint(2, 6)) for _ in range(rng.randint(2, 12)))
        docs.append({"id": f"doc-{i:04d}", "text": text, "lang": lang, "source": source})
    return docs


STATUTE_SUBJECTS = ["合同订立", "侵权责任", "行政许可", "劳动报酬", "继承顺序", "物权登记",
                    "诉讼时效", "消费者权益", "数据安全", "环境保护", "未成年人保护", "知识产权"]


def statutes():
    out = []
    for i, subject in enumerate(STATUTE_SUBJECTS, start=1):
        text = (f"第{i}条 为了规范{subject}相关活动，保护当事人的合法权益，制定本条。"
                f"违反本条规定的，由有关主管部门责令改正；造成损失的，依法承担赔偿责任。")
        out.append({"id": f"statute-{i:03d}", "text": text})
    return out


def instruction_samples(rng, prefix, n, category, task):
    out = []
    for i in range(n):
        q = f"{rng.choice(STATUTE_SUBJECTS)}：{rng.choice(ZH_LEGAL)}？"
        a = rng.choice(ZH_LEGAL) + "。"
        out.append({"id": f"{prefix}-{i:04d}", "query": q, "golden_answer": a, "category": category, "task": task})
    return out


def hipo_samples(rng, n=40):
    out = []
    for i in range(n):
        options = rng.sample(ZH_LEGAL, 4)
        q = (f"问题{i + 1}：关于{rng.choice(STATUTE_SUBJECTS)}，下列哪一项正确？"
             + " ".join(f"{l}. {o}" for l, o in zip("ABCD", options)) + " 请只回答选项字母。")
        out.append({"id": f"hipo-{i:03d}", "query": q, "golden_answer": rng.choice("ABCD"),
                    "category": "zh_polilegal", "task": "polilegal_tasks"})
    return out


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def main():
    rng = random.Random(7)
    OUT.mkdir(exist_ok=True)
    write_jsonl(OUT / "mini_corpus.jsonl", corpus(rng))
    write_jsonl(OUT / "statutes.jsonl", statutes())
    write_jsonl(OUT / "core_samples.jsonl", instruction_samples(rng, "core", 200, "zh_polilegal", "article_memory"))
    write_jsonl(OUT / "downstream_samples.jsonl",
                instruction_samples(rng, "down", 500, "zh_polilegal", "polilegal_tasks"))
    write_jsonl(OUT / "hipo_samples.jsonl", hipo_samples(rng))


if __name__ == "__main__":
    main()
